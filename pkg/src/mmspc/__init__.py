"""Module-current scheduling simulator for a series-parallel multilevel
battery string."""

from .analysis import (
    AgeingReport,
    RandlesParams,
    Spectrum,
    ageing_metric,
    amplitude_spectrum,
    degradation_filter,
    module_switch_rate,
    pattern_autocorrelation,
    randles_impedance,
    ripple_ratio,
    rms_avg_ratio,
)
from .config import ConfigError, ScenarioConfig, load_config, parse_config_text
from .control import (
    ControllerState,
    DelayLine,
    ObserverLUT,
    controller_step,
    delay_feedback,
    demand_generator,
    observer_estimate,
    select_state,
    state_cost,
)
from .electrical import (
    BatteryModule,
    InterconnectResistances,
    SingularSystemError,
    assemble_system,
    ideal_share,
    nodal_oracle,
    ocv,
    solve_distribution,
    step_battery,
)
from .experiments import (
    CompareReport,
    SweepReport,
    compare_methods,
    emit_csv,
    sweep_modulation,
    write_compare,
    write_sweep,
)
from .modulation import WaveformSpec, phase_current, reference_level, sigma_delta_step
from .reference import (
    OptimizedStateList,
    build_state_list,
    reference_cost,
    reference_select,
    slow_loop_rebuild,
)
from .sim import TickRecord, Trace, run_scenario
from .topology import (
    Connection,
    GroupLayout,
    StringState,
    all_states_for_level,
    decompose_groups,
    enumerate_transitions,
    format_state,
    parse_state,
)

__version__ = "0.1.0"
