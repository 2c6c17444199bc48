"""
Configuration management for the NTK eigen toolkit
Centralized config with environment variable support
"""

import os
import logging
from dataclasses import dataclass, field
from typing import Optional
from dotenv import load_dotenv

# load environment variables from .env file
load_dotenv()

APP_VERSION = "0.1.0"


@dataclass
class QuadratureConfig:
    """Gaussian expectation quadrature configuration"""
    order: int = field(default_factory=lambda: int(os.getenv("NTK_QUAD_ORDER", "128")))
    # Gauss-Legendre nodes per panel of the graded rules (raised to order // 8)
    split_order: int = field(default_factory=lambda: int(os.getenv("NTK_SPLIT_ORDER", "16")))
    split_radius: float = 12.0
    # largest variance integrated with Gauss-Hermite for smooth kinds
    hermite_max_variance: float = field(default_factory=lambda: float(os.getenv("NTK_HERMITE_MAX_VARIANCE", "1.5")))
    hermite_order: int = 128
    chunk_size: int = 256


@dataclass
class KernelConfig:
    """Infinite-width kernel recursion configuration"""
    max_points: int = 2048
    unit_norm_tol: float = 1e-8
    symmetry_tol: float = 1e-8
    psd_clip_tol: float = 1e-10
    psd_fail_tol: float = 1e-6
    degenerate_rho_tol: float = 1e-10
    # "g_max" or "footnote" variance for the beta3 constant
    beta3_variance: str = field(default_factory=lambda: os.getenv("NTK_BETA3_VARIANCE", "g_max"))
    threads: int = 1


@dataclass
class NetworkConfig:
    """Finite-width network and training configuration"""
    default_width: int = 256
    divergence_threshold: float = 1e6
    batch_size: int = 256
    # central-difference step of the Jacobian check
    fd_step: float = 1e-5


@dataclass
class SearchConfig:
    """Eigen-NAS search configuration"""
    n_samples: int = 30
    top_k: int = 5
    n_train: int = 512
    n_val: int = 256
    width: int = 256
    train_epochs: int = 20
    learning_rate: float = 0.5
    score_draws: int = 3
    score_mode: str = "trace_diag_empirical"


@dataclass
class OutputConfig:
    """Result file configuration"""
    output_dir: str = field(default_factory=lambda: os.getenv("NTK_OUTPUT_DIR", "runs"))
    float_format: str = "%.17g"


@dataclass
class DatabaseConfig:
    """Database configuration"""
    path: str = field(default_factory=lambda: os.getenv("DATABASE_PATH", "data/eigen_nas.db"))
    echo: bool = field(default_factory=lambda: os.getenv("DATABASE_ECHO", "false").lower() == "true")


@dataclass
class LoggingConfig:
    """Logging configuration"""
    level: str = field(default_factory=lambda: os.getenv("LOG_LEVEL", "INFO"))
    file_path: Optional[str] = field(default_factory=lambda: os.getenv("LOG_FILE_PATH"))
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class Config:
    """Main configuration container"""

    def __init__(self):
        self.quadrature = QuadratureConfig()
        self.kernel = KernelConfig()
        self.network = NetworkConfig()
        self.search = SearchConfig()
        self.output = OutputConfig()
        self.database = DatabaseConfig()
        self.logging = LoggingConfig()

    def __repr__(self):
        return (
            f"Config(\n"
            f"  quadrature={self.quadrature},\n"
            f"  kernel={self.kernel},\n"
            f"  network={self.network},\n"
            f"  search={self.search},\n"
            f"  output={self.output},\n"
            f"  database={self.database},\n"
            f"  logging={self.logging}\n"
            f")"
        )


# global config instance
config = Config()


def get_config() -> Config:
    """Get the global configuration instance"""
    return config


def reload_config() -> Config:
    """
    Reload configuration from environment variables

    The shared instance is refreshed in place, so modules that imported
    `config` see the new values.
    """
    load_dotenv(override=True)
    config.__init__()
    return config


def configure_logging(level: Optional[str] = None):
    """
    Apply the logging section to the root logger

    Args:
        level: Optional override of the configured level name
    """
    settings = config.logging
    handlers = [logging.StreamHandler()]
    if settings.file_path:
        os.makedirs(os.path.dirname(settings.file_path) or ".", exist_ok=True)
        handlers.append(logging.FileHandler(settings.file_path))

    logging.basicConfig(
        level=getattr(logging, (level or settings.level).upper(), logging.INFO),
        format=settings.format,
        handlers=handlers,
        force=True,
    )
