from __future__ import annotations

import os

import yaml

from src.errors import ConfigurationError
from src.globals import CUSTOM_CONFIG, DEFAULT_CONFIG
from src.logger import Logger
from src.utils import Singleton, deep_merge

logger = Logger(__name__)

REQUIRED_SECTIONS = ("defaults", "sampling", "thresholds")


class Config(metaclass=Singleton):
    """Singleton class to load and store lab configuration from yaml file.
    Configuration holds command defaults, sampler tuning and verification thresholds.
    Do not confuse with the resolved configuration of a single run, which is stored in src/settings.py.

    Args:
        defaults (dict): Default values of run configuration fields.
        sampling (dict): Sampler tuning parameters.
        thresholds (dict): Verification thresholds per check family.
    """

    def __init__(self, defaults: dict, sampling: dict, thresholds: dict):
        self._defaults = defaults
        self._sampling = sampling
        self._thresholds = thresholds

    @classmethod
    def get_instance(cls) -> Config | None:
        """Get instance of the Singleton class.

        Returns:
            Config | None: Config object or None if not created yet.
        """
        return Singleton._instances.get(cls)

    @staticmethod
    def read_yaml(config_yaml: str) -> dict:
        """Reads yaml file into a mapping.

        Args:
            config_yaml (str): Path to yaml file.

        Returns:
            dict: Parsed yaml.

        Raises:
            ConfigurationError: If the file can't be read or is not a mapping.
        """
        try:
            with open(config_yaml, encoding="utf-8") as f:
                data = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            raise ConfigurationError(f"Failed to read config {config_yaml}: {e}")
        if not isinstance(data, dict):
            raise ConfigurationError(f"Config {config_yaml} is not a mapping")
        return data

    @classmethod
    def from_yaml(cls, config_yaml: str, override_yaml: str | None = None) -> Config:
        """Create or update instance of the Config class from yaml file,
        optionally merged with a custom yaml file.

        Args:
            config_yaml (str): Path to default yaml file.
            override_yaml (str | None, optional): Path to custom yaml file. Defaults to None.

        Returns:
            Config: Config object.

        Raises:
            ConfigurationError: If a required section is missing.
        """
        logger.debug(f"Loading config from {config_yaml}")
        config_json = cls.read_yaml(config_yaml)
        if override_yaml:
            logger.info(f"Merging custom config from {override_yaml}")
            config_json = deep_merge(config_json, cls.read_yaml(override_yaml))

        for section in REQUIRED_SECTIONS:
            if not isinstance(config_json.get(section), dict):
                logger.error(f"No {section} section found in config")
                raise ConfigurationError(f"No {section} section found in config")

        instance = cls.get_instance()
        if instance:
            instance._defaults = config_json["defaults"]
            instance._sampling = config_json["sampling"]
            instance._thresholds = config_json["thresholds"]
            return instance
        return cls(config_json["defaults"], config_json["sampling"], config_json["thresholds"])

    @property
    def defaults(self) -> dict:
        """Default values of run configuration fields.

        Returns:
            dict: Copy of defaults.
        """
        return dict(self._defaults)

    @property
    def sampling(self) -> dict:
        """Sampler tuning parameters.

        Returns:
            dict: Copy of sampling parameters.
        """
        return dict(self._sampling)

    def threshold(self, check: str) -> dict:
        """Thresholds of a verification check family.

        Args:
            check (str): Check family name, e.g. "rho_scaling".

        Returns:
            dict: Threshold parameters.

        Raises:
            ConfigurationError: If no thresholds are configured for the check.
        """
        if check not in self._thresholds:
            raise ConfigurationError(f"No thresholds configured for check {check}")
        return dict(self._thresholds[check])

    @staticmethod
    def update() -> Config:
        """Load default config merged with the custom config from BBMLAB_CONFIG, if set.
        Falls back to the default config when the custom one can't be loaded.

        Returns:
            Config: Config object.
        """
        if CUSTOM_CONFIG and os.path.isfile(CUSTOM_CONFIG):
            try:
                return Config.from_yaml(DEFAULT_CONFIG, CUSTOM_CONFIG)
            except ConfigurationError as e:
                logger.warning(f"Failed to load custom config: {e}")
        return Config.from_yaml(DEFAULT_CONFIG)


Config.update()
