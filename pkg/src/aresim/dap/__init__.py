"""Data access primitive implementations, keyed by configuration flavor."""

from .abd import AbdDap
from .base import (Dap, StorageServer, access_rule, template_read, template_write,
                   traced_get_data, traced_get_tag, traced_put_data)
from .ldr import LdrDap
from .treas import TreasDap

_DAPS: dict[str, Dap] = {}


def register_dap(dap: Dap):
    _DAPS[dap.flavor] = dap


def dap_for(flavor: str) -> Dap:
    return _DAPS[flavor]


register_dap(AbdDap())
register_dap(LdrDap())
register_dap(TreasDap())
