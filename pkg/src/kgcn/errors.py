"""Error type shared by every module.

Each error carries a short machine-readable ``code`` (``"dim-mismatch"``,
``"overdim"``, ...) and the name of the module that raised it, so the CLI can
print ``module/code: message`` and map codes to exit statuses.
"""


class KgcnError(Exception):
    def __init__(self, code, message="", module=None):
        self.code = code
        self.module = module
        self.message = message
        super().__init__(f"{code}: {message}" if message else code)

    @property
    def qualified(self):
        return f"{self.module}/{self.code}" if self.module else self.code


def raiser(module):
    """Return a helper that raises ``KgcnError`` tagged with ``module``."""

    def fail(code, message=""):
        raise KgcnError(code, message, module)

    return fail
