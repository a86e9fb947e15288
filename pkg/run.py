# run.py
import sys

from dotenv import load_dotenv
load_dotenv()

from comix.cli import main

if __name__ == "__main__":
    sys.exit(main())
