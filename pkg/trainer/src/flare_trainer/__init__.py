"""flare_trainer: networks, training, and serving for flare removal."""

from .models import CAN, ModelConfig, UNet, build_can, build_model, build_unet
from .losses import IdentityFeatures, loss_terms, saturation_mask
from .train import TrainConfig, load_checkpoint, save_checkpoint, train
from .vgg import VggFeatures

__version__ = "0.1.0"
