from .checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from .losses import GeneratorLoss, critic_loss, generator_loss, gradient_penalty
from .networks import ConvLSTM, Critic, Decoder, Encoder, attention_combine
from .training import (
    NetworkConfig,
    RSMGAN,
    ReconstructionModel,
    TrainingDiverged,
    build_model,
    compute_losses,
    generator_forward,
    reconstruct,
    to_tensors,
    train,
)
