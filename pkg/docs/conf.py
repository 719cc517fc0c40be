#!/usr/bin/env python
from importlib.metadata import version as distribution_version

from packaging.version import Version

extensions = ["sphinx.ext.autodoc", "sphinx.ext.intersphinx", "sphinx_autodoc_typehints"]

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"
project = "weldfrac"
author = "The weldfrac developers"
copyright = "2024, " + author

v = Version(distribution_version(project))
version = v.base_version
release = v.public

language = "en"

exclude_patterns = ["_build"]
pygments_style = "sphinx"
highlight_language = "python"
todo_include_todos = False

html_theme = "sphinx_rtd_theme"
html_static_path = ["_static"]
htmlhelp_basename = project + "doc"

intersphinx_mapping = {
    "python": ("https://docs.python.org/3/", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
}
