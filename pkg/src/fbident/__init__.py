"""MIMO FIR identification through synthesis filter banks and SISO serialization."""
from .signals import ArSpec, MultichannelSignal, NoiseSpec, add_noise, ar_generate, read_csv, write_csv
from .multirate import (
    FirFilter,
    PolyphaseMatrix,
    SynthesisFilterBank,
    polyphase_reassemble,
    synth_direct,
    synth_polyphase,
    type2_polyphase,
    upsample,
)
from .mimo_core import MimoFirModel, ScalarStream, deserialize, mimo_apply, serialize, siso_apply
from .mapping import LptvSystem, bank_to_mimo, lptv_to_mimo, mimo_to_bank, pad_to_square
from .ident import (
    CorrelationData,
    IdentConfig,
    IdentReport,
    RankDeficiencyError,
    block_ls_identify,
    order_recursive_identify,
    report_errors,
    rls_identify,
    wiener_identify,
)

__version__ = "0.1.0"
