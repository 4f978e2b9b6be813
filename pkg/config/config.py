"""
Configuration module for spikegd.
Loads environment variables from .env file and resolves run configurations
from KEY=VALUE files and command-line flags.
"""
import os
import math
import logging
import argparse
from dataclasses import dataclass, asdict, fields
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

from dotenv import load_dotenv, dotenv_values

from handlers.commands import (
    Command,
    Scheme,
    Profile,
    DEFAULT_TRIALS,
    DEFAULT_KAPPA,
    DEFAULT_ITERATIONS,
    FALLBACK_ITERATIONS,
    FALLBACK_KAPPA,
)
from services.instances import InstanceSpec

# Load environment variables from .env file
env_path = Path(__file__).parent / '.env'
if env_path.exists():
    load_dotenv(dotenv_path=env_path)
else:
    load_dotenv()  # Try to load from current directory

APP_NAME = 'spikegd'
APP_VERSION = '1.0.0'

# Output settings
OUTPUT_DIR = os.getenv('SPIKEGD_OUTPUT_DIR', 'results')
WORKERS = int(os.getenv('SPIKEGD_WORKERS', str(os.cpu_count() or 1)))

# Logging settings
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_FILE = os.getenv('LOG_FILE', 'logs/spikegd.log')

DEFAULT_DISTANCES = tuple(round(0.1 * i, 1) for i in range(16))
DEFAULT_KAPPAS = (1.0, 3.0, 6.0)
DEFAULT_SNR_DB = (10.0, 20.0, 30.0, 40.0, 50.0)

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or missing run configuration; the offending key is named in the message."""


def load_config():
    """Load configuration from environment variables."""
    return {
        'app_name': APP_NAME,
        'version': APP_VERSION,
        'output_dir': OUTPUT_DIR,
        'workers': WORKERS,
        'log_level': LOG_LEVEL,
        'log_file': LOG_FILE,
    }


# Configure logging
def configure_logging():
    """Configure logging for the application."""
    log_dir = os.path.dirname(LOG_FILE)
    if log_dir and not os.path.exists(log_dir):
        os.makedirs(log_dir)

    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(LOG_FILE),
            logging.StreamHandler()
        ]
    )


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved and validated run configuration."""
    command: str
    n: int = 32
    r: int = 6
    kappa: float = FALLBACK_KAPPA
    min_sep_scaled: float = 2.0
    seed: int = 0
    scheme: str = Scheme.BOTH.value
    a_policy: Optional[float] = None
    iterations: int = FALLBACK_ITERATIONS
    tolerance: float = 1e-12
    output_dir: str = OUTPUT_DIR
    workers: int = WORKERS
    trials: int = 1
    distances: Tuple[float, ...] = DEFAULT_DISTANCES
    kappas: Tuple[float, ...] = DEFAULT_KAPPAS
    snr_db: Tuple[float, ...] = DEFAULT_SNR_DB
    noise_db: float = math.inf
    instance_file: Optional[str] = None
    plot: bool = False
    profile: str = Profile.FULL.value

    def instance_spec(self, kappa: Optional[float] = None) -> InstanceSpec:
        return InstanceSpec(
            n=self.n,
            r=self.r,
            kappa=self.kappa if kappa is None else kappa,
            min_sep_scaled=self.min_sep_scaled,
            seed=self.seed,
        )

    def to_key_values(self) -> Dict[str, str]:
        """The configuration as KEY=VALUE strings, readable back by parse_config."""
        values = {key: _format_value(value) for key, value in asdict(self).items() if value is not None}
        if self.a_policy is None:
            values['a_policy'] = 'auto'
        return values

    def to_dict(self) -> dict:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = [_format_value(v) for v in value]
            elif isinstance(value, float) and not math.isfinite(value):
                data[key] = _format_value(value)
        return data


CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))


def _format_value(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, tuple):
        return ','.join(_format_value(v) for v in value)
    if isinstance(value, float):
        return 'inf' if math.isinf(value) else repr(value)
    return str(value)


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got '{raw}'")


def _parse_float(key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got '{raw}'")
    if math.isnan(value):
        raise ConfigError(f"{key}: NaN is not allowed")
    return value


def _parse_float_list(key: str, raw: str) -> Tuple[float, ...]:
    items = [item.strip() for item in raw.split(',') if item.strip()]
    if not items:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers")
    return tuple(_parse_float(key, item) for item in items)


def _parse_bool(key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ConfigError(f"{key}: expected true or false, got '{raw}'")


def _parse_a_policy(key: str, raw: str) -> Optional[float]:
    if raw.strip().lower() == 'auto':
        return None
    return _parse_float(key, raw)


def _parse_text(key: str, raw: str) -> str:
    return raw.strip()


KEY_PARSERS = {
    'command': _parse_text,
    'n': _parse_int,
    'r': _parse_int,
    'kappa': _parse_float,
    'min_sep_scaled': _parse_float,
    'seed': _parse_int,
    'scheme': _parse_text,
    'a_policy': _parse_a_policy,
    'iterations': _parse_int,
    'tolerance': _parse_float,
    'output_dir': _parse_text,
    'workers': _parse_int,
    'trials': _parse_int,
    'distances': _parse_float_list,
    'kappas': _parse_float_list,
    'snr_db': _parse_float_list,
    'noise_db': _parse_float,
    'instance_file': _parse_text,
    'plot': _parse_bool,
    'profile': _parse_text,
}


class _UsageParser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _UsageParser(
        prog=APP_NAME,
        description='Spike deconvolution by preconditioned gradient descent.',
    )
    parser.add_argument('positional_command', nargs='?', metavar='command',
                        help=f"one of: {', '.join(c.value for c in Command)}")
    parser.add_argument('--config', dest='config_file', help='KEY=VALUE run configuration file')
    for key in CONFIG_KEYS:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
    return parser


def read_config_file(path: str) -> Dict[str, str]:
    """
    Read a flat KEY=VALUE file.

    Raises:
        ConfigError: missing file or unknown key
    """
    if not os.path.isfile(path):
        raise ConfigError(f"config: file not found: {path}")
    values = {}
    for key, value in dotenv_values(path).items():
        normalized = key.strip().lower().replace('-', '_')
        if normalized not in KEY_PARSERS:
            raise ConfigError(f"{key}: unknown configuration key in {path}")
        if value is None:
            raise ConfigError(f"{key}: missing value in {path}")
        values[normalized] = value
    return values


def parse_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    """
    Resolve defaults < config file < flags into a validated RunConfig.

    Args:
        argv: Command-line arguments without the program name

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: unknown key, unparsable value or violated precondition
    """
    args = build_parser().parse_args(argv)
    raw: Dict[str, str] = {}
    if args.config_file:
        raw.update(read_config_file(args.config_file))
    if args.positional_command:
        raw['command'] = args.positional_command
    for key in CONFIG_KEYS:
        flag_value = getattr(args, key)
        if flag_value is not None:
            raw[key] = flag_value

    if 'command' not in raw:
        raise ConfigError(f"command: required, one of {', '.join(c.value for c in Command)}")
    values = {key: KEY_PARSERS[key](key, value) for key, value in raw.items()}
    config = resolve_defaults(values)
    validate_config(config)
    logger.debug(f"Resolved run configuration: {config}")
    return config


def resolve_defaults(values: dict) -> RunConfig:
    """Fill the command-dependent defaults (kappa, trials, iterations) and build the RunConfig."""
    try:
        command = Command(values['command'])
    except ValueError:
        raise ConfigError(f"command: unknown command '{values['command']}'")
    try:
        profile = Profile(values.get('profile', Profile.FULL.value))
    except ValueError:
        raise ConfigError(f"profile: expected full or smoke, got '{values['profile']}'")
    values = dict(values)
    values.setdefault('kappa', DEFAULT_KAPPA.get(command, FALLBACK_KAPPA))
    values.setdefault('trials', DEFAULT_TRIALS[profile][command])
    values.setdefault('iterations', DEFAULT_ITERATIONS.get(command, FALLBACK_ITERATIONS))
    return RunConfig(**values)


def _require(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{key}: {message}")


def validate_config(config: RunConfig) -> None:
    """Check every numeric field against the library preconditions before any work starts."""
    _require(config.command in {c.value for c in Command}, 'command', f"unknown command '{config.command}'")
    _require(config.n >= 2, 'n', f"must be >= 2, got {config.n}")
    _require(config.r >= 1, 'r', f"must be >= 1, got {config.r}")
    _require(config.kappa >= 1, 'kappa', f"must be >= 1, got {config.kappa}")
    _require(all(k >= 1 and math.isfinite(k) for k in config.kappas), 'kappas',
             f"every value must be finite and >= 1, got {list(config.kappas)}")
    _require(config.min_sep_scaled >= 0, 'min_sep_scaled', f"must be >= 0, got {config.min_sep_scaled}")
    _require(config.min_sep_scaled * config.r <= config.n + 1, 'min_sep_scaled',
             f"{config.r} spikes cannot be {config.min_sep_scaled}/(n+1) apart at n={config.n}")
    _require(config.scheme in {s.value for s in Scheme}, 'scheme', f"unknown scheme '{config.scheme}'")
    _require(config.a_policy is None or (config.a_policy > 0 and math.isfinite(config.a_policy)),
             'a_policy', f"must be auto or a positive number, got {config.a_policy}")
    _require(config.iterations >= 1, 'iterations', f"must be >= 1, got {config.iterations}")
    _require(config.tolerance > 0, 'tolerance', f"must be positive, got {config.tolerance}")
    _require(config.workers >= 1, 'workers', f"must be >= 1, got {config.workers}")
    _require(config.trials >= 1, 'trials', f"must be >= 1, got {config.trials}")
    _require(all(d >= 0 and math.isfinite(d) for d in config.distances), 'distances',
             f"every distance must be finite and >= 0, got {list(config.distances)}")
    _require(all(s != -math.inf for s in config.snr_db), 'snr_db', "-inf dB is not a valid SNR")
    _require(config.noise_db != -math.inf, 'noise_db', "-inf dB is not a valid SNR")
    _require(config.profile in {p.value for p in Profile}, 'profile', f"unknown profile '{config.profile}'")
    if config.instance_file is not None:
        _require(os.path.isfile(config.instance_file), 'instance_file', f"file not found: {config.instance_file}")

