import logging
import os

from dotenv import load_dotenv

load_dotenv()

# Configure logging once for the whole package.
# COSGAUSS_LOG_LEVEL and COSGAUSS_LOG_FILE may come from the environment or a .env file
_log_file = os.getenv("COSGAUSS_LOG_FILE") or None

logging.basicConfig(
    filename=_log_file,
    level=os.getenv("COSGAUSS_LOG_LEVEL", "INFO").upper(),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)

# Create logger
logger = logging.getLogger("cosgauss_frontend")
