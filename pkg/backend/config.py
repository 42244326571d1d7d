"""
Configuration module for the spectral-kinetics toolkit.

This module loads configuration values from environment variables. Every
value here is a default; run-specific settings come from the INI file and
command-line flags handled in cli.py.
"""

import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _env_bool(name: str, default: str) -> bool:
    return os.environ.get(name, default).lower() in ('true', 't', '1', 'yes', 'y')


# Logging
LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO').upper()

# Application Paths
DATA_DIR = os.environ.get('DATA_DIR', os.path.join(os.path.dirname(__file__), 'data'))
SAMPLE_PANEL_PATH = os.environ.get('SAMPLE_PANEL_PATH', os.path.join(DATA_DIR, 'sp500_sample.csv'))
OUTPUT_DIR = os.environ.get('OUTPUT_DIR', os.path.join(os.getcwd(), 'output'))

# Linear algebra
EIGEN_METHOD = os.environ.get('EIGEN_METHOD', 'lapack')  # 'lapack' or 'jacobi'
JACOBI_MAX_SWEEPS = int(os.environ.get('JACOBI_MAX_SWEEPS', '100'))
JACOBI_TOLERANCE = float(os.environ.get('JACOBI_TOLERANCE', '1e-14'))

# Random matrix theory
CUTOFF_KAPPA = float(os.environ.get('CUTOFF_KAPPA', '10'))
FIT_GRID_POINTS = int(os.environ.get('FIT_GRID_POINTS', '256'))
MIN_FIT_EIGENVALUES = int(os.environ.get('MIN_FIT_EIGENVALUES', '32'))

# Market data
MIN_COVERAGE = float(os.environ.get('MIN_COVERAGE', '1.0'))

# Potential and kinetics
DEFAULT_H0 = float(os.environ.get('DEFAULT_H0', '-1.0'))
DEFAULT_H1 = float(os.environ.get('DEFAULT_H1', '0.5'))
DEFAULT_INITIAL_AMPLITUDE = float(os.environ.get('DEFAULT_INITIAL_AMPLITUDE', '1.0'))
DEFAULT_STEPS = int(os.environ.get('DEFAULT_STEPS', '2000'))
DEFAULT_ENSEMBLE = int(os.environ.get('DEFAULT_ENSEMBLE', '100'))
DETECTION_ENSEMBLE = int(os.environ.get('DETECTION_ENSEMBLE', '1000'))
DT_SAFETY = float(os.environ.get('DT_SAFETY', '0.1'))
STABILITY_LIMIT = float(os.environ.get('STABILITY_LIMIT', '0.5'))
DIVERGENCE_FACTOR = float(os.environ.get('DIVERGENCE_FACTOR', '1e6'))
NOISE_CHUNK_STEPS = int(os.environ.get('NOISE_CHUNK_STEPS', '64'))
REALIZATION_BATCH = int(os.environ.get('REALIZATION_BATCH', '50'))

# Analytics
TAIL_WINDOW = float(os.environ.get('TAIL_WINDOW', '0.25'))
MIN_TAIL_POINTS = int(os.environ.get('MIN_TAIL_POINTS', '16'))

# Detection
SECOND_DERIVATIVE_THRESHOLD = float(os.environ.get('SECOND_DERIVATIVE_THRESHOLD', '1.0'))
SMOOTH_WIDTH = int(os.environ.get('SMOOTH_WIDTH', '11'))
LOG_GRID_POINTS = int(os.environ.get('LOG_GRID_POINTS', '48'))
NOISE_SIGMAS = float(os.environ.get('NOISE_SIGMAS', '3.0'))
SHORT_WINDOW_END = float(os.environ.get('SHORT_WINDOW_END', '2.0'))
MIN_FIT_POINTS = int(os.environ.get('MIN_FIT_POINTS', '16'))
REPORT_SCHEMA_VERSION = os.environ.get('REPORT_SCHEMA_VERSION', '1.1')

# Worker pool
MAX_WORKERS = int(os.environ.get('MAX_WORKERS', '4'))

# Plot output
WRITE_PLOTS = _env_bool('WRITE_PLOTS', 'true')
