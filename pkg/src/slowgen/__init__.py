"""slowgen: black-box efficiency attacks on image-to-text generation APIs.

An autoregressive captioning service pays per generated token: every extra
token is another decoder forward pass, more latency, and more energy.  This
package searches for small image perturbations that make a victim service
generate for as long as possible, using only query access.

The pieces:

- ``imageops``: image/perturbation value types, L2 projection, box clamping,
  lossless 8-bit PNG I/O.
- ``objectives``: the scalar the optimizer maximizes, combining generated
  length, end-of-sequence probability suppression, and next-token
  distribution flatness.
- ``optimizer``: antithetic zero-order gradient estimation, the projected
  ascent loop, and estimator diagnostics against closed-form oracles.
- ``victims``: deterministic synthetic victims; an analytic family with
  exact gradients and a rule family with a known length mechanism.
- ``protocol`` / ``client`` / ``mockserver``: a byte-exact JSON-over-HTTP
  query protocol, its client, and a server wrapping any in-process victim.
- ``baselines``: budget-matched Gaussian corruption and the bit-depth
  quantization defense.
- ``harness``: batch experiments, efficiency metrics (relative increases in
  length, latency, and decoder calls), JSONL/CSV reports.
- ``cli``: the ``slowgen`` command.
"""

from .baselines import gaussian_baseline, quantize_defense
from .client import HttpVictim, http_query
from .errors import (
    AttackError,
    ConfigError,
    DegenerateDistributionError,
    MalformedResponseError,
    ProtocolError,
    SlowgenError,
    TransportError,
)
from .harness import (
    EfficiencyReport,
    ExperimentConfig,
    attack_config_from_dict,
    evaluate_pair,
    i_energy_proxy,
    i_latency,
    i_length,
    l2_distance,
    run_experiment,
)
from .imageops import (
    ImageTensor,
    Perturbation,
    apply,
    clip_l2,
    l2_norm,
    load_image,
    save_image,
)
from .mockserver import MockVictimServer, serve_mock
from .objectives import (
    GenerationResponse,
    ObjectiveParams,
    PositionInfo,
    eos_objective,
    len_objective,
    normalize_topk,
    total_objective,
    var_objective,
)
from .optimizer import (
    AttackConfig,
    AttackResult,
    EstimatorCheckReport,
    attack,
    estimate_gradient,
    estimator_check,
    nes_gradient,
    sample_noise,
)
from .protocol import decode_request, encode_request, encode_response, parse_response
from .victims import (
    AnalyticVictim,
    LinearVictim,
    QuadraticVictim,
    RuleVictim,
    VictimEndpoint,
    victim_from_spec,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticVictim",
    "AttackConfig",
    "AttackError",
    "AttackResult",
    "ConfigError",
    "DegenerateDistributionError",
    "EfficiencyReport",
    "EstimatorCheckReport",
    "ExperimentConfig",
    "GenerationResponse",
    "HttpVictim",
    "ImageTensor",
    "LinearVictim",
    "MalformedResponseError",
    "MockVictimServer",
    "ObjectiveParams",
    "Perturbation",
    "PositionInfo",
    "ProtocolError",
    "QuadraticVictim",
    "RuleVictim",
    "SlowgenError",
    "TransportError",
    "VictimEndpoint",
    "apply",
    "attack",
    "attack_config_from_dict",
    "clip_l2",
    "decode_request",
    "encode_request",
    "encode_response",
    "eos_objective",
    "estimate_gradient",
    "estimator_check",
    "evaluate_pair",
    "gaussian_baseline",
    "http_query",
    "i_energy_proxy",
    "i_latency",
    "i_length",
    "l2_distance",
    "l2_norm",
    "len_objective",
    "load_image",
    "nes_gradient",
    "normalize_topk",
    "parse_response",
    "quantize_defense",
    "run_experiment",
    "sample_noise",
    "save_image",
    "serve_mock",
    "total_objective",
    "var_objective",
    "victim_from_spec",
]
