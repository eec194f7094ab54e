"""Módulo de proveniência e verificações do pipeline de exportação."""

from .fingerprint import Fingerprint, fingerprint
from .manifest import RunManifest, build_manifest, read_manifest, write_manifest
from .pipeline_guard import Finding, FindingKind, all_clean, check_export_dir, lint_templates

__all__ = [
    'Fingerprint',
    'fingerprint',
    'RunManifest',
    'build_manifest',
    'read_manifest',
    'write_manifest',
    'Finding',
    'FindingKind',
    'all_clean',
    'check_export_dir',
    'lint_templates',
]
