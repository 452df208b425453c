"""Training configuration shared by every imputation method."""

from __future__ import annotations

from dataclasses import asdict, dataclass

METHODS = (
    "gain", "gain+vs",
    "vae", "vae+it", "vae+bp",
    "vae+vs", "vae+vs+it", "vae+vs+bp",
)

# Search space used in the experiments; single runs may override freely.
HIDDEN_CHOICES = ((), (0.5,), (1.0, 0.5))
LATENT_FRACTIONS = (0.10, 0.50, 1.00)
BATCH_SIZES = (64, 128, 256, 512, 1024)
LEARNING_RATES = (1e-3, 1e-5)
TAU_CHOICES = (0.1, 0.5, 1.0, 2.0, 10.0)


@dataclass(frozen=True)
class HyperParams:
    """Everything a single training + imputation run needs.

    ``hidden`` holds hidden layer widths as fractions of the input feature
    width (empty tuple = no hidden layers). ``tau`` only matters for the
    variable-splitting methods, ``alpha`` only for GAIN, and
    ``i_max``/``e_min``/``bp_lr`` only for the iterative imputers.
    """

    method: str = "vae"
    hidden: tuple[float, ...] = (1.0, 0.5)
    latent_fraction: float = 0.5
    batch_size: int = 128
    lr: float = 1e-3
    tau: float = 1.0
    alpha: float = 10.0
    i_max: int = 10000
    e_min: float = 1e-4
    bp_lr: float = 1e-2
    epochs: int = 200
    seed: int = 0
    dloss_missing_only: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.batch_size < 1 or self.epochs < 1 or self.i_max < 1:
            raise ValueError("batch_size, epochs and i_max must be >= 1")
        if self.lr <= 0 or self.tau <= 0 or self.e_min <= 0:
            raise ValueError("lr, tau and e_min must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0 < self.latent_fraction <= 1.0:
            raise ValueError("latent_fraction must be in (0, 1]")

    @property
    def family(self) -> str:
        """Base model family: 'gain' or 'vae'."""
        return "gain" if self.method.startswith("gain") else "vae"

    @property
    def variable_splitting(self) -> bool:
        return "+vs" in self.method

    @property
    def imputer(self) -> str:
        """Imputation procedure: 'plain', 'it' or 'bp'."""
        if self.method.endswith("+it"):
            return "it"
        if self.method.endswith("+bp"):
            return "bp"
        return "plain"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @staticmethod
    def from_dict(d: dict) -> "HyperParams":
        d = dict(d)
        d["hidden"] = tuple(d.get("hidden", ()))
        return HyperParams(**d)
