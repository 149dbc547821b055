"""flarekit: physics-based lens flare synthesis and removal."""

from .image import (
    as_image,
    bilinear_resample,
    delinearize,
    linearize,
    luminance,
    read_png,
    read_tensor,
    write_png,
    write_tensor,
)
from .aperture import (
    ApertureConfig,
    ApertureSpec,
    rasterize_aperture,
    sample_aperture_spec,
)
from .waveoptics import (
    FlareRenderConfig,
    LightSource,
    SRF,
    SpectralConfig,
    apply_distortion,
    defocus_phase,
    monochromatic_psf,
    render_scattering_flare,
    sample_srf,
    spectral_psf,
)
from .synthesis import (
    AffineAug,
    DatasetConfig,
    FlareSample,
    SceneAug,
    augment_flare,
    augment_scene,
    composite,
    generate_dataset,
    sample_noise_sigma,
)
from .maskblend import (
    blend_light_source,
    feather_mask,
    flare_residual,
    masked_prediction,
    saturation_mask,
)
from .losses import (
    GaussianPyramidExtractor,
    IdentityExtractor,
    LossReport,
    l1,
    perceptual,
    total_loss,
)
from .pipeline import (
    IdentityPredictor,
    OraclePredictor,
    SubprocessPredictor,
    eval_masked,
    predict,
    psnr,
    remove_flare_highres,
    ssim,
)

__version__ = "0.1.0"
