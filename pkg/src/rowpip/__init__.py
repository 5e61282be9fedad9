"""Crop-row detection, weed prescription maps and boom-sprayer simulation."""

from .errors import (
    ConfigError,
    DataError,
    FormatError,
    GenerationError,
    GeoreferencingError,
    InvariantError,
    RowpipError,
    ShapeError,
    UndefinedMetricError,
)
from .evaluation import (
    ApplicationReport,
    AreaLossReport,
    DetectionReport,
    EffectivenessReport,
    application_accuracy,
    application_report,
    area_loss,
    detection_table,
    effectiveness,
    match_segments,
    precision_accuracy,
)
from .pipeline import PipelineConfig, PipelineResult, run_pipeline
from .raster import (
    BinaryMask,
    Feature,
    GeoRaster,
    GeoTransform,
    mask_area,
    pixel_to_world,
    read_geojson,
    read_raster,
    world_to_pixel,
    write_geojson,
    write_raster,
)
from .render import render_map
from .rows import (
    Orientation,
    PeakParams,
    RowSegment,
    TileSpec,
    detect_rows,
    find_peaks,
    projection_profile,
    tile_grid,
)
from .segmentation import SegmentationConfig, binarize, exgi, segment
from .spray import AsAppliedMap, SprayerSpec, as_applied_no_spray_area, plan_passes, simulate
from .synth import FieldRecipe, GroundTruth, generate, truth_to_rx
from .weeds import (
    BufferConfig,
    GridConfig,
    Plot,
    PrescriptionMap,
    TriggerRule,
    assign_rates,
    buffer_rows,
    build_grid,
    connected_components,
    no_spray_area,
    prescribe,
    weed_mask,
)

__version__ = "0.1.0"
