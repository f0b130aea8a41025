import os

from dotenv import load_dotenv

from src.logger import Logger
from src.utils import EnvVars

logger = Logger(__name__)

# region constants
CWD = os.getcwd()
LOCAL_ENV = os.path.join(CWD, "local.env")
PACKAGE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEFAULT_CONFIG = os.path.join(PACKAGE_DIR, "config.yml")
MANIFEST_JSON = "manifest.json"
# endregion

if os.path.isfile(LOCAL_ENV):
    logger.debug(f"Loading local environment variables from {LOCAL_ENV}")
    load_dotenv(LOCAL_ENV)

# region envvars
OUTPUT_DIR = os.getenv(EnvVars.OUTPUT_DIR, os.path.join(CWD, "output"))
CUSTOM_CONFIG = os.getenv(EnvVars.CONFIG)
ENV = os.getenv(EnvVars.ENV)
# endregion

is_development = ENV == "DEV"
if is_development:
    logger.debug("Running in development mode, errors will be re-raised.")
