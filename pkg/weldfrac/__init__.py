from .config import Config, config_hash, dump_config, load_config  # noqa: F401
from .materials import FractureProps, MaterialDB, PhaseProps, PropertyTable  # noqa: F401
from .mesh import Mesh, read_mesh, write_mesh  # noqa: F401
from .metallurgy import (  # noqa: F401
    carbon_equivalent,
    generate_cct,
    generate_ttt,
    transformation_step,
)
from .scenarios import (  # noqa: F401
    DefectSpec,
    PressurizationProgram,
    PressurizationSettings,
    WeldPass,
    WeldSettings,
    run_defect_sweep,
    run_dilatometry,
    run_pressurization,
    run_ssy_jr,
    run_weld,
)
from .types import (  # noqa: F401
    PHASES,
    Composition,
    ConfigError,
    ConvergenceError,
    FrozenDict,
    KineticsConfig,
    MaterialError,
    MeshError,
    MetallurgyError,
    PhaseState,
    PropertyRangeWarning,
    ScenarioError,
    ScenarioInvariantError,
    SolverError,
    SSYViolationError,
    TransformationTemps,
    WeldfracError,
)
