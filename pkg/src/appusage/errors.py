"""Exception hierarchy shared across the package."""


class AppUsageError(Exception):
    """Base class for every error raised on bad input data."""


class IngestError(AppUsageError, ValueError):
    """A file could not be parsed into the domain model."""

    def __init__(self, message, *, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class MalformedRow(IngestError):
    pass


class UnknownKind(IngestError):
    def __init__(self, value, *, path=None, line=None):
        self.value = value
        super().__init__(f"unknown event kind {value!r} (expected 'fg' or 'bg')", path=path, line=line)


class EmptyFile(IngestError):
    pass


class DuplicatePackage(IngestError):
    def __init__(self, package, first, second, *, path=None, line=None):
        self.package = package
        super().__init__(
            f"package {package!r} mapped to both {first!r} and {second!r}", path=path, line=line
        )


class DuplicateStudent(IngestError):
    def __init__(self, student_id, *, path=None, line=None):
        self.student_id = student_id
        super().__init__(f"student {student_id!r} listed twice", path=path, line=line)


class CgpaOutOfRange(IngestError):
    def __init__(self, student_id, value, *, path=None, line=None):
        self.student_id = student_id
        self.value = value
        super().__init__(f"CGPA {value} of student {student_id!r} outside [0, 4]", path=path, line=line)


class NoAnalyzableStudents(AppUsageError, ValueError):
    pass


class StatsError(AppUsageError, ValueError):
    pass


class ConstantInput(StatsError):
    pass


class LengthMismatch(StatsError):
    pass


class TooFewSamples(StatsError):
    pass


class POutOfRange(StatsError):
    pass


class TooFewPoints(AppUsageError, ValueError):
    pass


class AllNoise(AppUsageError, ValueError):
    pass


class KTooLarge(AppUsageError, ValueError):
    pass


class TooFewFamilies(AppUsageError, ValueError):
    pass


class InfeasibleTotal(AppUsageError, ValueError):
    pass
