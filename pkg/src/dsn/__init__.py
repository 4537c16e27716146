"""Frame-wise dynamically slimmable speech-enhancement inference engine.

A small causal enhancement network whose dynamic sub-components (one
convolution pair, GRU groups, attention heads) are switched per time
frame by a learned gating policy. Slim execution structurally skips the
gated work; masked-dense execution computes everything and multiplies by
the gate, serving as the equivalence oracle. A MAC ledger accounts for
the savings, and a CLI binds enhancement, analysis, accounting,
benchmarking and verification together.
"""
from .compute_ledger import (MacCounter, MacReport, activation_report, bench,
                             block_gate_pattern, count_macs, effective_macs,
                             expected_macs)
from .dsn_model import (DsnModel, EnhanceResult, ModelConfig, build_model,
                        forward_streaming, forward_utterance,
                        init_stream_state, load_weights, multi_res_stft_loss,
                        save_weights, total_objective)
from .dynamic_blocks import MASKED, SLIM
from .errors import (ConfigError, DataError, DsnError, NumericError,
                     ShapeError, VerificationError, WeightFormatError)
from .policy_gate import (GateVector, gate_loss, gate_loss_mgt,
                          gumbel_softmax, map_ovrl_to_theta, policy_grad)
from .signal_frontend import (AudioBuffer, apply_mask, compress, decompress,
                              ideal_ratio_mask, istft, read_wav, si_sdr,
                              stft, write_wav)

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer", "ConfigError", "DataError", "DsnError", "DsnModel",
    "EnhanceResult", "GateVector", "MacCounter", "MacReport", "MASKED",
    "ModelConfig", "NumericError", "SLIM", "ShapeError",
    "VerificationError", "WeightFormatError", "activation_report",
    "apply_mask", "bench", "block_gate_pattern", "build_model", "compress",
    "count_macs", "decompress", "effective_macs", "expected_macs",
    "forward_streaming", "forward_utterance", "gate_loss", "gate_loss_mgt",
    "gumbel_softmax", "ideal_ratio_mask", "init_stream_state", "istft",
    "load_weights", "map_ovrl_to_theta", "multi_res_stft_loss",
    "policy_grad", "read_wav", "save_weights", "si_sdr", "stft",
    "total_objective", "write_wav", "__version__",
]
