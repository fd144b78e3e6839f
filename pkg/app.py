"""Command-line entry point for the uncertainty benchmark lab.

Flow:
1. Load `.env` defaults (output root, seed, workers, log level)
2. Hand argv to the bench CLI
3. Exit with its code: 0 success, 1 usage error, 2 data error, 3 numeric failure

Usage:
    python app.py generate --track regression
    python app.py reference
    python app.py train-eval --table 2
    python app.py reproduce --table 5-trend --set segmentation.replicates=20
"""
from uqbench.bench_cli import main

if __name__ == '__main__':
    main()
