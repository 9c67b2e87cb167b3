# Sphinx configuration of the hardproj documentation.
#
# Options reference: http://www.sphinx-doc.org/en/master/config

import datetime
import os
import sys

sys.path.insert(0, os.path.abspath(".."))


def get_package_version():
    from hardproj.version import get_version

    return get_version()


# -- Project information -----------------------------------------------------

project = "hardproj"
copyright = "{}, hardproj developers".format(datetime.datetime.now().year)
author = "hardproj developers"
release = get_package_version()

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.coverage",
    "sphinx.ext.intersphinx",
    "sphinx.ext.autosectionlabel",
    "sphinx.ext.mathjax",
]

autosectionlabel_prefix_document = True
autodoc_member_order = "bysource"

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable", None),
    "scipy": ("https://docs.scipy.org/doc/scipy", None),
}

templates_path = ["_templates"]
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]
master_doc = "index"
language = "en"
pygments_style = "sphinx"

# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"
html_static_path = ["_static"]
