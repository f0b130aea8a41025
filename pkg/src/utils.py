import hashlib
import os


class EnvVars:
    """Simple class to store environment variables names."""

    OUTPUT_DIR = "BBMLAB_OUTPUT_DIR"
    CONFIG = "BBMLAB_CONFIG"
    ENV = "ENV"


class Commands:
    """Simple class to store CLI command names."""

    BBM = "bbm"
    FRONT = "front"
    LANDSCAPE = "landscape"
    CLUSTER = "cluster"
    RHO = "rho"
    VERIFY = "verify"

    @classmethod
    def all(cls) -> list[str]:
        """Returns all command names in a fixed order.

        Returns:
            list[str]: Command names.
        """
        return [cls.BBM, cls.FRONT, cls.LANDSCAPE, cls.CLUSTER, cls.RHO, cls.VERIFY]

    @classmethod
    def planar(cls) -> list[str]:
        """Returns commands which need at least two spatial dimensions.

        Returns:
            list[str]: Command names.
        """
        return [cls.FRONT, cls.LANDSCAPE, cls.CLUSTER, cls.RHO]


class SpineModes:
    """Simple class to store spine sampling modes."""

    APPROXIMATE = "approximate"
    TILTED = "tilted"


class IntensityModes:
    """Simple class to store branching time intensity modes."""

    RATE2 = "rate2"
    TILTED = "tilted"


class ConeModes:
    """Simple class to store cone membership modes of the front."""

    SIGNED = "signed"
    ABSOLUTE = "absolute"


class Formats:
    """Simple class to store artifact formats."""

    CSV = "csv"
    JSON = "json"


class Singleton(type):
    """Metaclass to create a singleton class."""

    _instances = {}

    def __call__(cls, *args, **kwargs):
        if cls not in cls._instances:
            cls._instances[cls] = super(Singleton, cls).__call__(*args, **kwargs)
        return cls._instances[cls]


def make_dirs(dirs: list[str]) -> None:
    """Create multiple directories

    Args:
        dirs (list[str]): List of directories
    """
    for dir in dirs:
        os.makedirs(dir, exist_ok=True)


def fmt_float(value: float) -> str:
    """Locale-independent shortest round-trip representation of a float,
    so the same value is always written with the same characters.

    Args:
        value (float): Value to format.

    Returns:
        str: Formatted value.
    """
    return repr(float(value))


def sha256_file(path: str) -> str:
    """Computes the SHA-256 checksum of the file.

    Args:
        path (str): Path to the file.

    Returns:
        str: Hex digest.
    """
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def deep_merge(base: dict, override: dict) -> dict:
    """Recursively merges override into a copy of base.

    Args:
        base (dict): Base mapping.
        override (dict): Mapping with values taking precedence.

    Returns:
        dict: Merged mapping.
    """
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def coordinate_columns(prefix: str, count: int, start: int = 1) -> list[str]:
    """Generates numbered column names like x1..xd.

    Args:
        prefix (str): Column prefix.
        count (int): Number of columns.
        start (int, optional): First index. Defaults to 1.

    Returns:
        list[str]: Column names.
    """
    return [f"{prefix}{i}" for i in range(start, start + count)]

