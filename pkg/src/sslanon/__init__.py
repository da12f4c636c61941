"""Language-independent speaker anonymization toolkit.

Pseudo-speaker generation over embedding pools, soft content units, F0
tracking, stream assembly, GAN vocoder losses, a McAdams-coefficient
baseline and the OO/OA/AA/OR privacy evaluation protocol.
"""
from .assembly import AssembledFrames, assemble, upsample_frames
from .dsp import (
    LpcFrame,
    McAdamsConfig,
    MelConfig,
    Waveform,
    frame_signal,
    lpc_coeffs,
    mcadams_anonymize,
    mel_spectrogram,
)
from .evaluation import (
    MetricParams,
    ScenarioReport,
    TrialScore,
    compute_eer,
    compute_min_dcf,
    error_rate,
    run_scenario,
    score_trials,
)
from .f0 import F0Config, F0Track, extract_f0, nccf
from .pool import (
    AnonymizationParams,
    EmbeddingPool,
    Gender,
    SpeakerEmbedding,
    cosine_distance,
    generate_pseudo_embedding,
    select_far_candidates,
)
from .softunits import (
    SoftUnitCodebook,
    ce_loss,
    kmeans_fit,
    quantize,
    soft_distribution,
    train_soft_head,
)
from .vocloss import (
    DiscriminatorFeatures,
    VocLossConfig,
    adversarial_losses,
    feature_matching_loss,
    generator_loss,
    mel_loss,
)

__version__ = "0.1.0"
