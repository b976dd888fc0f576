"""Certified local Lipschitz bounds for feedforward ReLU networks.

Computes guaranteed upper bounds on the local Lipschitz constant of dense /
conv2d / max-pooling chains around a nominal input, certifies lower bounds on
minimum adversarial L2 perturbations from them, and brackets the true constant
with sampling and gradient-ascent lower bounds.
"""

from .bounds import (
    AffineReluBoundArtifacts,
    DomainMask,
    MaxPoolBound,
    PowerIterConfig,
    PowerIterReport,
    affine_relu_bound,
    compute_ybar,
    masked_spectral_norm,
    maxpool_bound,
    propagate_mask,
    relu_local_lipschitz,
)
from .certify import CertificationResult, SearchConfig, certify_radius, logit_gap
from .empirical import (
    AttackConfig,
    LowerBoundReport,
    adversarial_upper_bound,
    lipschitz_lower_gradient,
    lipschitz_lower_random,
    vjp,
)
from .errors import (
    ConfigError,
    InvalidInputError,
    LipcertError,
    MaterializeCapError,
    ModelFormatError,
    NumericalError,
    ShapeError,
)
from .network import (
    Affine,
    AffineRelu,
    Flatten,
    Identity,
    MaxPool2d,
    NetworkSpec,
    forward,
    forward_intermediates,
    load_input,
    load_model,
    maxpool_forward,
)
from .operators import (
    AffineOperator,
    apply,
    apply_transpose,
    conv2d_operator,
    dense_operator,
    materialize,
    row_norms_masked,
)
from .pipeline import (
    BoundConfig,
    LayerBoundRecord,
    NetworkBoundTrace,
    network_global_bound,
    network_local_bound,
)
from .tensor import as_tensor, l2_norm, seeded_fill

__version__ = "0.1.0"
