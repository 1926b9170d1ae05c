# configs/columns.py
# Column schemas of the CSV archive layout.

# Dynamic forcings, in model input order
FORCING_COLS = ["prcp", "dayl", "srad", "tmin", "tmax", "vp", "pet"]

# Flow files: depth units by default, volumetric when data.flow_units = cfs
FLOW_COL = "q_mm_day"
FLOW_COL_CFS = "q_cfs"

ID_COL = "basin_id"
DATE_COL = "date"

EMBEDDING_COLS = [f"e{i:02d}" for i in range(64)]

# Pixel files consumed by aggregate_pixel_embeddings
PIXEL_KEY_COLS = ["year", "pixel_id"]

# Static table kinds and their fixed widths (fusion width follows the model)
ATTRIBUTES = "attributes-17"
AEF = "aef-64"
FUSION = "fusion-embedding"
TABLE_KINDS = (ATTRIBUTES, AEF, FUSION)
TABLE_WIDTHS = {ATTRIBUTES: 17, AEF: 64}

# Similarity method tag per table kind
KIND_TO_METHOD = {ATTRIBUTES: "attributes", AEF: "aef", FUSION: "fusion"}
METHOD_TO_KIND = {v: k for k, v in KIND_TO_METHOD.items()}

# Synthetic fleet attribute names: the three reservoir parameters first
SYNTH_THETA_COLS = ["recession_k", "soil_capacity", "evap_coeff"]
SYNTH_ATTRIBUTE_COLS = SYNTH_THETA_COLS + [f"nuisance_{i:02d}" for i in range(1, 15)]

# Unit conversion constants
CUBIC_M_PER_CUBIC_FT = 0.0283168
SECONDS_PER_DAY = 86400.0
