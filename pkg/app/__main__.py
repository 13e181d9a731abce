# app/__main__.py
import sys

from app.main import main

sys.exit(main())
