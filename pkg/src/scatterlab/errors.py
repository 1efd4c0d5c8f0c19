"""Exception hierarchy shared by all scatterlab modules."""


class ScatterlabError(Exception):
    """Base class for every error raised by scatterlab."""


class AliasingError(ScatterlabError):
    """Spectral support of a state reaches the grid Nyquist wavenumber."""


class BoxSizeError(ScatterlabError):
    """A wavepacket (or its future evolution) does not fit inside the box."""


class ExtrapolationError(ScatterlabError):
    """A drift request falls outside the time range covered by stored frames."""


class ConfigError(ScatterlabError):
    """Invalid experiment configuration.

    ``problems`` holds one human readable message per violated rule.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class FrameFormatError(ScatterlabError):
    """A frame or ensemble dump does not follow the binary layout."""
