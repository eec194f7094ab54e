"""
Verificações de pipeline: sobrescrita do diretório de exportação e
incompatibilidade de templates de chat
"""

from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Sequence, Union

from config import CHECKPOINT_SUFFIXES
from src.errors import InvalidManifest, IoFailure
from src.guard.manifest import RunManifest, manifest_path, read_manifest
from src.text.chat_template import TemplateId, has_think_marker, parse_template_id


class FindingKind(str, Enum):
    CLEAN = 'Clean'
    OVERWRITE_RISK = 'OverwriteRisk'
    STALE_MANIFEST = 'StaleManifest'
    ALGORITHM_MISMATCH = 'AlgorithmMismatch'
    TEMPLATE_MISMATCH = 'TemplateMismatch'
    THINK_LEAKAGE = 'ThinkLeakage'


@dataclass
class Finding:
    """Resultado de uma verificação; achados são dados, não exceções."""

    kind: FindingKind
    message: str = ''
    details: Dict[str, object] = field(default_factory=dict)

    @property
    def is_clean(self) -> bool:
        return self.kind == FindingKind.CLEAN

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data['kind'] = self.kind.value
        return data


def all_clean(findings: Sequence[Finding]) -> bool:
    return all(f.is_clean for f in findings)


def _checkpoint_files(directory: Path) -> List[str]:
    try:
        return sorted(p.name for p in directory.iterdir()
                      if p.is_file() and p.suffix in CHECKPOINT_SUFFIXES)
    except OSError as e:
        raise IoFailure(f"Falha ao listar {directory}: {e}") from e


def check_export_dir(directory: Union[str, Path], manifest: RunManifest) -> List[Finding]:
    """
    Verifica se exportar para o diretório sobrescreveria outra execução.

    Somente leitura. Diretório inexistente conta como vazio.

    Args:
        directory: Diretório de exportação
        manifest: Manifesto da execução atual

    Returns:
        Lista de achados (Clean, OverwriteRisk, StaleManifest ou AlgorithmMismatch)
    """
    directory = Path(directory)
    if not directory.exists():
        return [Finding(FindingKind.CLEAN, f"{directory} ainda não existe")]
    if not directory.is_dir():
        raise IoFailure(f"{directory} não é um diretório")

    checkpoints = _checkpoint_files(directory)
    try:
        stored = read_manifest(directory)
    except InvalidManifest as e:
        if not checkpoints:
            return [Finding(FindingKind.CLEAN, f"Manifesto ilegível sem checkpoints: {e}")]
        return [Finding(
            FindingKind.STALE_MANIFEST,
            f"Checkpoints presentes com manifesto ilegível: {e}",
            {'checkpoints': checkpoints, 'manifest': str(manifest_path(directory))},
        )]

    if not checkpoints:
        return [Finding(FindingKind.CLEAN, "Nenhum checkpoint no diretório")]

    if stored is None:
        return [Finding(
            FindingKind.STALE_MANIFEST,
            f"{len(checkpoints)} checkpoint(s) sem {manifest_path(directory).name}",
            {'checkpoints': checkpoints},
        )]

    if stored.algorithms != manifest.algorithms:
        return [Finding(
            FindingKind.ALGORITHM_MISMATCH,
            "Manifestos usam algoritmos de hash diferentes",
            {'stored': sorted(stored.algorithms), 'current': sorted(manifest.algorithms)},
        )]

    if stored.digest != manifest.digest:
        return [Finding(
            FindingKind.OVERWRITE_RISK,
            f"Exportação existente de outra execução ({stored.digest[:12]} ≠ {manifest.digest[:12]})",
            {'stored_digest': stored.digest, 'current_digest': manifest.digest,
             'checkpoints': checkpoints},
        )]

    return [Finding(FindingKind.CLEAN, "Exportação existente corresponde ao manifesto",
                    {'digest': manifest.digest})]


def lint_templates(train_template: Union[str, TemplateId], eval_template: Union[str, TemplateId],
                   generations_sample: Sequence[str]) -> List[Finding]:
    """
    Compara os templates de treino e avaliação e procura blocos <think> vazados.

    Args:
        train_template: Template usado no treino
        eval_template: Template usado na avaliação
        generations_sample: Amostra de gerações do modelo

    Returns:
        Lista de achados (TemplateMismatch, ThinkLeakage ou Clean)
    """
    train_id = parse_template_id(train_template)
    eval_id = parse_template_id(eval_template)
    generations = list(generations_sample)
    findings = []

    if train_id != eval_id:
        findings.append(Finding(
            FindingKind.TEMPLATE_MISMATCH,
            f"Treino com '{train_id.value}', avaliação com '{eval_id.value}'",
            {'train_template': train_id.value, 'eval_template': eval_id.value},
        ))

    if eval_id == TemplateId.NO_THINK:
        leaked = [i for i, text in enumerate(generations) if has_think_marker(text)]
        if leaked:
            findings.append(Finding(
                FindingKind.THINK_LEAKAGE,
                f"{len(leaked)} de {len(generations)} gerações contêm <think> sob template sem thinking",
                {'count': len(leaked), 'sampled': len(generations), 'indices': leaked},
            ))

    if not findings:
        findings.append(Finding(FindingKind.CLEAN, "Templates consistentes",
                                {'count': 0, 'sampled': len(generations)}))
    return findings
