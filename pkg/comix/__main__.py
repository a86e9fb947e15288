import sys

from dotenv import load_dotenv

from .cli import main

load_dotenv()
sys.exit(main())
