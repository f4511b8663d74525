"""Exception hierarchy shared by the discretization and experiment code."""


class MeshlessError(Exception):
    """Base class for all errors raised by :mod:`invmeshless`.

    ``node`` and ``step`` locate the failure inside an integration when known.
    """

    def __init__(self, message, node=None, step=None):
        self.message = message
        self.node = node
        self.step = step
        super().__init__(self._render())

    def _render(self):
        loc = []
        if self.node is not None:
            loc.append(f"node={self.node}")
        if self.step is not None:
            loc.append(f"step={self.step}")
        return f"{self.message} ({', '.join(loc)})" if loc else self.message

    def at_step(self, step):
        self.step = step
        self.args = (self._render(),)
        return self


class DegenerateGrid(MeshlessError):
    pass


class InsufficientStencil(MeshlessError):
    pass


class SingularStencil(MeshlessError):
    pass


class PoleHit(MeshlessError):
    pass


class FrameUndefined(MeshlessError):
    pass


class NoAdmissibleRoot(MeshlessError):
    pass


class NonPositiveU(MeshlessError):
    pass


class OutOfDomain(MeshlessError):
    pass
