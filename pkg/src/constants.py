"""
ECBench 공통 상수 정의
"""

# === 크기 단위 ===
KIB = 1024
MIB = 1024 * KIB
GIB = 1024 * MIB

SECTOR_SIZE = 512  # 트레이스 오프셋 정렬 단위
PAGE_SIZE = 4 * KIB  # 인덱스 비트맵 / 디바이스 비용 단위

# === Galois Field ===
GF_POLY = 0x11D  # x^8 + x^4 + x^3 + x^2 + 1
GF_ORDER = 256

# === 기본 EC 설정 ===
DEFAULT_K = 6
DEFAULT_M = 4
DEFAULT_BLOCK_SIZE = 4 * MIB
DEFAULT_CLUSTER_SIZE = 16

# === 디바이스 프로파일 ===
PROFILE_SSD = "ssd"
PROFILE_HDD = "hdd"
DEVICE_PROFILES = (PROFILE_SSD, PROFILE_HDD)

DEFAULT_SEQ_WRITE_US = 50.0  # 4 KiB 페이지당 비용
DEFAULT_RAND_WRITE_US = 200.0
DEFAULT_SEQ_READ_US = 40.0
DEFAULT_RAND_READ_US = 150.0
DEFAULT_HDD_RANDOM_MULTIPLIER = 25.0

DEFAULT_MESSAGE_US = 5.0
DEFAULT_BYTE_NS = 0.32

REPLICATION = {PROFILE_SSD: 2, PROFILE_HDD: 3}

# === 디바이스 연산 ===
OP_READ = "read"
OP_WRITE = "write"
OP_OVERWRITE = "overwrite"
DEVICE_OPS = (OP_READ, OP_WRITE, OP_OVERWRITE)

PATTERN_SEQ = "seq"
PATTERN_RAND = "rand"

# "rand-overwrite" 형태의 op class 문자열
OP_CLASSES = tuple(f"{p}-{op}" for p in (PATTERN_SEQ, PATTERN_RAND) for op in DEVICE_OPS)

# === 네트워크 메시지 종류 ===
MSG_REPLICA = "replica"
MSG_DELTA = "delta"
MSG_PARITY_DELTA = "parity_delta"
MSG_FORWARD = "forward"
MSG_ORIGINAL = "original"
MSG_RECOVERY = "recovery"
MSG_CLIENT = "client"

CLIENT_NODE = -1  # 클라이언트 유입 트래픽용 가상 노드

# === 로그 유닛 상태 ===
UNIT_EMPTY = "EMPTY"
UNIT_RECYCLABLE = "RECYCLABLE"
UNIT_RECYCLING = "RECYCLING"
UNIT_RECYCLED = "RECYCLED"

UNIT_TRANSITIONS = {
    UNIT_EMPTY: UNIT_RECYCLABLE,
    UNIT_RECYCLABLE: UNIT_RECYCLING,
    UNIT_RECYCLING: UNIT_RECYCLED,
    UNIT_RECYCLED: UNIT_EMPTY,
}

# === 로그 레코드 종류 ===
KIND_RAW = "raw-data"  # newest-wins
KIND_DELTA = "data-delta"  # XOR fold
KIND_PARITY_DELTA = "parity-delta"  # XOR fold
KIND_ORIGINAL = "original"  # first-wins
RECORD_KINDS = (KIND_RAW, KIND_DELTA, KIND_PARITY_DELTA, KIND_ORIGINAL)

# === 로그 풀 기본값 ===
DEFAULT_UNIT_CAPACITY = 16 * MIB
DEFAULT_MIN_UNITS = 2
DEFAULT_MAX_UNITS = 4
DEFAULT_HARD_MAX_UNITS = 20
DEFAULT_POOLS_PER_DEVICE = 4
DEFAULT_FLUSH_AGE_US = 10_000_000

# === 전략 ===
STRATEGY_FO = "fo"
STRATEGY_PL = "pl"
STRATEGY_PLR = "plr"
STRATEGY_PARIX = "parix"
STRATEGY_CORD = "cord"
STRATEGY_TSUE = "tsue"
STRATEGY_NAMES = (
    STRATEGY_FO,
    STRATEGY_PL,
    STRATEGY_PLR,
    STRATEGY_PARIX,
    STRATEGY_CORD,
    STRATEGY_TSUE,
)

DEFAULT_TICK_PERIOD_US = 10_000
DEFAULT_RECYCLE_THRESHOLD = 0.75
DEFAULT_PL_LOG_BUDGET = 64 * MIB
DEFAULT_PLR_RESERVED_BYTES = 1 * MIB
DEFAULT_CORD_BUFFER_BYTES = 16 * MIB

# TSUE breakdown 플래그
FLAG_DATALOG_MERGE = "o1"
FLAG_PARITYLOG_MERGE = "o2"
FLAG_ELASTIC_POOLS = "o3"
FLAG_MULTI_POOL = "o4"
FLAG_DELTALOG = "o5"
ALL_FLAGS = frozenset({"o1", "o2", "o3", "o4", "o5"})

# TSUE 로그 계층
LAYER_DATA = "data"
LAYER_DELTA = "delta"
LAYER_PARITY = "parity"

# === 트레이스 ===
TRACE_OP_READ = "R"
TRACE_OP_WRITE = "W"
TRACE_FIELDS = ("timestamp_us", "volume_id", "offset", "size", "op")
ALLOWED_TRACE_EXTENSIONS = {".csv", ".txt", ".trace", ".gz"}

DEFAULT_VOLUME_BYTES = 1 * GIB
DEFAULT_VOLUME_SLOTS = 4
DEFAULT_INTERARRIVAL_US = 100.0

# === 스케줄러 작업 상태 ===
JOB_STATUS_QUEUED = "queued"
JOB_STATUS_PROCESSING = "processing"
JOB_STATUS_COMPLETED = "completed"
JOB_STATUS_FAILED = "failed"

# === 리포트 ===
REPORT_SCHEMA = "ecbench.report/1"
REPORT_FORMATS = ("json", "table")
NOT_AVAILABLE = "n/a"

REPORT_COUNTERS = (
    "read_write_ops",
    "read_write_bytes",
    "read_ops",
    "read_bytes",
    "write_ops",
    "write_bytes",
    "overwrite_ops",
    "overwrite_bytes",
    "network_messages",
    "network_bytes",
    "client_messages",
    "client_bytes",
)

# === 종료 코드 ===
EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
