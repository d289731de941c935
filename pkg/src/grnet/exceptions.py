"""Exception types raised across the package."""


class GRNetError(Exception):
    """Base class for all package errors."""


class DataError(GRNetError):
    """Problem with on-disk or in-memory sample data."""


class OrphanFileError(DataError):
    def __init__(self, stems, missing):
        self.stems = sorted(stems)
        self.missing = missing
        super().__init__(
            "stems without a complete rgb/depth/gt triple: "
            + ", ".join(f"{s} (missing {'/'.join(missing[s])})" for s in self.stems)
        )


class SizeMismatchError(DataError):
    pass


class InvalidSpecError(GRNetError, ValueError):
    pass


class ShapeError(GRNetError, ValueError):
    """Tensor shapes violate a module's stride or channel contract."""


class ConfigError(GRNetError, ValueError):
    pass


class UnknownPresetError(ConfigError, KeyError):
    def __init__(self, name, valid):
        self.name = name
        self.valid = list(valid)
        super().__init__(f"unknown preset {name!r}; valid presets: {', '.join(self.valid)}")

    def __str__(self):
        return self.args[0]


class CheckpointMismatchError(GRNetError):
    pass


class TrainingDivergedError(GRNetError):
    def __init__(self, step, last_checkpoint=None):
        self.step = step
        self.last_checkpoint = last_checkpoint
        super().__init__(f"non-finite loss at step {step}")


class GatingDisabledError(GRNetError):
    pass


class EmptyInputError(GRNetError, ValueError):
    pass
