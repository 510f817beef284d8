"""
Bootstrap Diagnostics - Specification Validity Tests from Bootstrap Draws
"""

__version__ = "0.1.0"
