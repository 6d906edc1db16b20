"""Hurricane-driven outage simulation for radial distribution networks."""

from .analytics import (
    ComparisonReport,
    ObservedOutageSeries,
    avg_rmse,
    calibrate_fragility,
    calibrate_regions,
    calibration_points,
    compare,
    parse_observed,
    quantile_bands,
    resolution_sweep,
)
from .engine import (
    OutageEnsemble,
    SimulationConfig,
    fragility_prob,
    run_hrsra,
    run_smc,
    sample_resistance,
    simulate,
    simulate_matrix,
)
from .network import (
    Feeder,
    FragilityParams,
    Network,
    RegionFragilityTable,
    feeder_design_wind,
    parse_fragility,
    parse_network,
)
from .track import TcTrack, TcTrackPoint, interpolate_track, parse_track
from .windfield import (
    BBox,
    WindFieldSeries,
    WindProfileParams,
    generate_wind_fields,
    gust_at,
    sustained_wind_at,
)

__version__ = "0.1.0"
