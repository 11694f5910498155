"""Access to the form files shipped with the package.

The ``forms/`` data directory holds a small catalogue of ``.frm`` files
used by the command line tool and the test suite.  ``builtin_form_source``
returns the raw text of one of them, ``load_form_file`` parses a file from
disk.
"""

from importlib import resources

from .formlang import FormFile, parse_forms

__all__ = ["builtin_form_names", "builtin_form_source", "load_form_file"]


def _forms_dir():
    return resources.files(__package__) / "forms"


def builtin_form_names():
    """Sorted names of the form files shipped with the package."""
    names = []
    for entry in _forms_dir().iterdir():
        if entry.name.endswith(".frm"):
            names.append(entry.name[:-len(".frm")])
    return sorted(names)


def builtin_form_source(name):
    """Return the source text of a builtin form file."""
    path = _forms_dir() / (name + ".frm")
    if not path.is_file():
        known = ", ".join(builtin_form_names())
        raise KeyError(f"no builtin form file {name!r} (have: {known})")
    return path.read_text(encoding="utf-8")


def load_form_file(path) -> FormFile:
    """Read and parse a form file from disk."""
    with open(path, "r", encoding="utf-8") as handle:
        return parse_forms(handle.read())
