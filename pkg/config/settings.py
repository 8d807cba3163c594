import os
from dotenv import load_dotenv

# Загружаем переменные окружения из .env файла
load_dotenv()


def _env_int(name: str, default: int) -> int:
    """Прочитать целое из окружения, пустое значение = default"""
    raw = os.getenv(name, "").strip()
    return int(raw) if raw else default


def _env_flag(name: str, default: bool) -> bool:
    raw = os.getenv(name, "").strip().lower()
    if not raw:
        return default
    return raw in ("1", "true", "yes", "on")


# Обучение (гибридная функция потерь)
DEFAULT_LAMBDA = 1.0                 # Вес плотностной части L = L_C + λ·L_D
DEFAULT_EPOCHS = 40
DEFAULT_BATCH_SIZE = 64
DEFAULT_LR_CLASSIFIER = 1e-2         # SGD с моментом для {Θ_f, Θ_c}
DEFAULT_MOMENTUM = 0.9
DEFAULT_LR_FLOW = 1e-3               # Adam для {Θ_f, Θ_d}
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
GRAD_CLIP_NORM = 10.0                # Клиппинг нормы градиента на каждом под-шаге
DEFAULT_WARMUP_EPOCHS = 5            # Эпох только классификатора перед совместной фазой (joint)
LR_DECAY_FLOOR = 0.05                # Косинусное затухание lr до этой доли к концу фазы
DEFAULT_SEED = 0

# Архитектура
DEFAULT_D_LATENT = 16
SMALL_INPUT_MAX_DIM = 16             # До этой размерности входа - tanh MLP 64-64
SMALL_ENCODER_HIDDEN = (64, 64)
LARGE_ENCODER_HIDDEN = (256, 128)    # Для 784-мерного MNIST, ReLU

# Поток (flow)
DEFAULT_FLOW_BLOCKS = 8              # Пары (ActNorm, Coupling)
DEFAULT_FLOW_HIDDEN = 32             # Ширина scale/shift сетей
SCALE_CAP_INIT = 2.0                 # Начальный множитель tanh для log-scale
ACTNORM_VARIANCE_FLOOR = 1e-6

# Данные
TRAIN_FRACTION = 0.8                 # Доля каждого известного класса в train
MAX_LAYOUT_ATTEMPTS = 10_000         # Попыток разместить центры кластеров
MIN_CENTER_DISTANCE_FACTOR = 4.0     # Минимальное расстояние = фактор × spread
DEFAULT_LAYOUT_BOX = 10.0            # Центры в кубе [-box, box]^dim
PIXEL_SCALE = 255.0

# Порог отсечения неизвестных
DEFAULT_SLACK = 0.0                  # s в натах, может быть отрицательным
SCORE_CHUNK_SIZE = 1024              # Размер чанка при пакетном скоринге

# Чекпоинт
CHECKPOINT_MAGIC = b"OHYB"
CHECKPOINT_VERSION = 1
CHECKPOINT_FILE_NAME = "model.ohyb"

# Эксперименты
DEFAULT_K_KNOWN = 6
DEFAULT_N_PARTITIONS = 5
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_OUTPUT_DIR = "runs/default"
DEFAULT_LAMBDA_SWEEP = (0.5, 1.0, 2.0)
DEFAULT_FLOW_BLOCKS_SWEEP = (4, 8, 10, 16)

# Конкурентность
OPENHYBRID_THREADS = max(1, _env_int("OPENHYBRID_THREADS", min(4, os.cpu_count() or 1)))

# Логирование
LOG_LEVEL = os.getenv("OPENHYBRID_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# JSON логирование
ENABLE_JSON_LOGGING = _env_flag("OPENHYBRID_JSON_LOG", True)
JSON_LOG_FILE = os.getenv("OPENHYBRID_LOG_FILE", "logs/openhybrid.json")

# Ротация логов
LOG_ROTATION_ENABLED = True
LOG_MAX_BYTES = 1 * 1024 * 1024      # 1 МБ
LOG_BACKUP_COUNT = 5

# Мониторинг
SLOW_OPERATION_THRESHOLD = 30.0      # Порог медленной операции (секунды)
