import logging
import os
import sys

from dotenv import load_dotenv

from cli import create_app

# Load .env file for NUSG_THREADS and NUSG_LOG_LEVEL
load_dotenv()

logging.basicConfig(
    level=os.getenv("NUSG_LOG_LEVEL", "INFO").upper(),
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)

app = create_app()
sys.exit(app.run())
