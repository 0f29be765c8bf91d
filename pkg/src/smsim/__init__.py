"""Link-level simulator and multi-user detectors for the large-scale
spatial-modulation MIMO uplink over cyclic-prefix single-carrier channels."""

from .channel import (
    AESelection,
    CorrelationSpec,
    EffectiveChannel,
    MultipathChannel,
    apply_cpsc_channel,
    block_circulant_matrix,
    calibrate_noise,
    cyclic_index,
    effective_channel,
    exp_correlation_matrix,
    generate_channel,
    select_aes,
)
from .config import SimConfig, parse_config_file, parse_snr_grid
from .detectors import (
    DetectionResult,
    GspState,
    SupportSet,
    detect_gsp,
    detect_ml,
    detect_mmse,
    detect_oracle_ls,
    detect_sp_classical,
    ml_search_size,
    mmse_estimate,
    quantize_symbol,
)
from .harness import (
    BerRecord,
    TrialOutcome,
    count_bit_errors,
    derive_rng,
    emit_csv,
    read_csv,
    run_sweep,
    run_trial,
)
from .modem import (
    GroupFrame,
    SignalConstellation,
    SmSymbol,
    aggregate_blocks,
    assemble_group,
    build_constellation,
    payload_bit_count,
    sm_demap,
    sm_map,
    throughput_bpcu,
)
from .numerics import RankDeficiencyError, hermitian_sqrt, ls_solve
from .plotting import render_ber_figure

__version__ = "0.1.0"
