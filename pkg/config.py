"""
Environment configuration
Values come from the process environment or a local .env file
"""
import os
from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv("NEUCEPT_LOG_LEVEL", "INFO").upper()
N_JOBS = int(os.getenv("NEUCEPT_N_JOBS", "1"))
DEFAULT_SEED = int(os.getenv("NEUCEPT_DEFAULT_SEED", "0"))

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
