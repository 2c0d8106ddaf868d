# Toolkit Version - Change this when releasing a new version
APP_VERSION = "1.0.0"

# Model file format - bump when the JSON container layout changes
MODEL_FORMAT_VERSION = 1

# Storage Settings
DEFAULT_OUTPUT_DIR = "runs"
LOGS_SUBDIR = "logs"
RESOLVED_CONFIG_FILE = "resolved_config.json"
ARTIFACT_HASHES_FILE = "artifact_hashes.json"

# Audio Settings
DEFAULT_SAMPLE_RATE = 16000
SUPPORTED_SAMPLE_RATES = (8000, 16000, 48000)
PCM16_SCALE = 32768.0

# Psychoacoustic model (masking threshold)
PSY_WINDOW_SIZE = 2048  # N
PSY_HOP = 512
PSD_FLOOR_DB = -200.0  # zero-magnitude bins
PSD_NORMALIZED_MAX_DB = 96.0
HEARING_MIN_HZ = 20.0
HEARING_MAX_HZ = 20000.0
MASKER_BARK_RADIUS = 0.5

# Resampler quality (Kaiser beta for the polyphase windowed-sinc filter, >= 60 dB stopband)
RESAMPLE_KAISER_BETA = 8.0

# Toy ASR feature chain
ASR_WINDOW = 512
ASR_HOP = 256
ASR_MEL_FILTERS = 24
ASR_LOG_FLOOR_DB = -100.0
ASR_INCLUDE_DCT = False
ASR_CONTEXT = 2  # frames stacked on each side

# Toy ASR network and training
ASR_HIDDEN_SIZES = (128, 128)
TRAIN_EPOCHS = 40
TRAIN_BATCH_SIZE = 256
TRAIN_LR = 2e-3
TRAIN_HOLDOUT = 0.2
CORPUS_SIZE = 600
BLANK_TOKEN = "-"

# Training-time augmentation (extra copies of each training utterance)
TRAIN_AUGMENT_COPIES = 2
TRAIN_AUGMENT_GAIN_DB = (-20.0, 0.0)
TRAIN_AUGMENT_SNR_DB = (5.0, 40.0)  # Gaussian noise against the utterance RMS
TRAIN_MUSIC_PROB = 0.5
TRAIN_MUSIC_LEVEL_DB = (-12.0, 12.0)  # background footage peak against the utterance peak
TRAIN_BANDLIMIT_PROB = 0.3
TRAIN_BANDLIMIT_RATES = (8000, 10000, 11025)

# Attack defaults (two-stage attack)
ATTACK_EPSILON = 0.15
ATTACK_LR = 5e-3
ATTACK_SIGMA = 0.01
ATTACK_MAX_ITERS = 3000
ATTACK_ALPHA_INIT = 0.001
ATTACK_ALPHA_VALUE = 20.0
ATTACK_DURATION = 16000  # samples of delta (1 s at 16 kHz)
ATTACK_CHECK_INTERVAL = 1
ATTACK_STAGE2_ITERS = 500
ATTACK_ROBUST_CHECKS = 16
ATTACK_PATIENCE = 100  # stage-1 iterations without a new best loss before the step decays
ATTACK_LR_DECAY = 0.5
ATTACK_MIN_LR = 1e-4

# Masking search defaults
SEARCH_K = 2
SEARCH_FRAME_LEN_MS = 200.0
SEARCH_FRAME_LEN_CAP_MS = 200.0  # upper limit of the post-masking decay period
SEARCH_MAX_ITERS = 500
SEARCH_AMPLITUDE = 0.3  # absolute footage gain (synth-footage, and search with level null)
SEARCH_LEVEL = 4.0  # footage peak relative to the perturbation peak
SEARCH_LEVEL_BACKOFF_STEPS = 20
SEARCH_BATCH = 1
SEARCH_MAX_SATURATION = 0.01  # fraction of clipped samples tolerated in a mixture
FOOTAGE_FADE_MS = 10
DEFAULT_TONES_HZ = (262.0, 330.0, 392.0, 440.0, 523.0)
DEFAULT_TIMBRES = ("sine", "piano", "organ")
DEFAULT_DURATIONS_MS = (200, 400)

# Relay (play/record) simulation defaults
RELAY_LOW_RATE = 11025
RELAY_GAIN_JITTER_DB = 1.0
RELAY_NOISE_SIGMA = 0.003
RELAY_REVERB_DECAY_MS = 30.0
RELAY_REVERB_WET = 0.3

# Defenses (scaled from 5 kHz / 8 kHz to the 16 kHz toolkit rate)
DEFENSE_LOW_RATE = 10000
DEFENSE_RESTORE_RATE = 16000
DEFENSE_SIGMA_GRID = (0.0, 0.01, 0.02, 0.04, 0.08, 0.16)
DEFENSE_TRIALS = 50

# Logging
LOG_INTERVAL = 100

# Exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_TRAINING_FAILURE = 3
EXIT_PRECONDITION_FAILURE = 4
