# ─────────────────────────────────────────────────────────────────────────────
# NUMERICAL DEFAULTS: single source of truth for the engine.
# cn_config.json overrides these; the factory falls back here if the file is
# missing or broken.
# ─────────────────────────────────────────────────────────────────────────────

LEAKY_RELU_SLOPE = 0.01
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1

ADAM_LR = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# ePhysician hidden width and representation (interpretation vector) width.
HIDDEN_DIM = 10
REPRESENTATION_DIM = 10

# Discriminator class reserved for the noise modality; real modalities are 1..M.
NOISE_MODALITY = 0

# Training schedule defaults
MAX_OUTER_STEPS = 100
DISCRIMINATOR_STEPS = 1
BATCH_SIZE = 32
CONVERGENCE_TOL = 1e-4

# Data pipeline
KNN_NEIGHBORS = 5
SPLIT_RATIOS = (0.6, 0.2, 0.2)
# Below this many samples in a class the split falls back to unstratified.
MIN_CLASS_SIZE_FOR_STRATIFY = 3

# Evaluation
N_TRIALS = 10
BAYES_MC_SAMPLES = 100_000

# PCA snapshots (outer steps), matching the published visualisation sequence.
SNAPSHOT_STEPS = [5, 10, 20, 30, 40]
PCA_TOL = 1e-10
PCA_MAX_ITER = 100_000

# ─────────────────────────────────────────────────────────────────────────────
# FILE FORMATS
# ─────────────────────────────────────────────────────────────────────────────

CHECKPOINT_FORMAT = "cn-checkpoint/1"

HISTORY_COLUMNS = ["step", "L_C_train", "L_D_train", "val_accuracy", "stop_reason"]
SNAPSHOT_COLUMNS = ["step", "modality", "sample_id", "pc1", "pc2",
                    "explained_frac", "loss_d", "val_acc"]
TABLE_COLUMNS = ["cell_id", "metric", "mean", "std", "n"]
TRIAL_COLUMNS = ["cell_id", "trial", "seed", "accuracy", "micro_f1", "macro_f1",
                 "status", "split_fingerprint", "config_fingerprint"]
MODALITY_MAP_COLUMNS = ["feature_name", "group_name"]

METRIC_NAMES = ["accuracy", "micro_f1", "macro_f1"]
