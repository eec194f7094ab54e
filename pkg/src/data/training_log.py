"""
Módulo para carregar logs de treinamento (JSON lines do trainer)
"""

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Union

import pandas as pd

from config import PLOT_CONFIG
from src.errors import IoFailure, NoValidLines
from src.utils.console import Console


class Stage(str, Enum):
    PT = 'PT'
    SFT = 'SFT'


class Split(str, Enum):
    TRAIN = 'Train'
    EVAL = 'Eval'


@dataclass(frozen=True)
class TrainLogPoint:
    stage: Stage
    epoch: float
    split: Split
    loss: float


def _parse_line(line: str, stage: Stage) -> Optional[TrainLogPoint]:
    try:
        record = json.loads(line)
    except json.JSONDecodeError:
        return None
    if not isinstance(record, dict) or 'epoch' not in record:
        return None

    if 'eval_loss' in record:
        split, key = Split.EVAL, 'eval_loss'
    elif 'loss' in record:
        split, key = Split.TRAIN, 'loss'
    else:
        return None

    try:
        epoch, loss = float(record['epoch']), float(record[key])
    except (TypeError, ValueError):
        return None
    if epoch < 0 or not math.isfinite(epoch) or not math.isfinite(loss):
        return None
    return TrainLogPoint(stage, epoch, split, loss)


def parse_training_log(path: Union[str, Path], stage: Union[str, Stage]) -> List[TrainLogPoint]:
    """
    Lê um log de treinamento no formato JSON lines.

    Linhas {"epoch", "loss"} viram pontos de treino e {"epoch", "eval_loss"}
    pontos de avaliação. Linhas ilegíveis são contadas e ignoradas.

    Args:
        path: Arquivo de log
        stage: Estágio do treinamento (PT ou SFT)

    Returns:
        Lista de TrainLogPoint na ordem do arquivo

    Raises:
        IoFailure: arquivo inacessível
        NoValidLines: nenhuma linha aproveitável
    """
    stage = Stage(str(stage.value if isinstance(stage, Stage) else stage).upper())
    path = Path(path)
    Console.info(f"Carregando log de treinamento: {path.name}")

    points: List[TrainLogPoint] = []
    skipped = 0
    try:
        with open(path, 'r', encoding='utf-8') as f:
            for line in f:
                if not line.strip():
                    continue
                point = _parse_line(line, stage)
                if point is None:
                    skipped += 1
                else:
                    points.append(point)
    except OSError as e:
        raise IoFailure(f"Falha ao ler {path}: {e}") from e

    if skipped:
        Console.warn(f"{skipped} linha(s) ignorada(s) em {path.name}")
    if not points:
        raise NoValidLines(f"Nenhuma linha válida em {path}")

    Console.ok(f"{len(points)} pontos ({stage.value})")
    return points


def points_to_frame(points: Sequence[TrainLogPoint]) -> pd.DataFrame:
    """Converte os pontos em DataFrame com colunas stage, epoch, split, loss."""
    return pd.DataFrame(
        [{'stage': p.stage.value, 'epoch': p.epoch, 'split': p.split.value, 'loss': p.loss}
         for p in points],
        columns=['stage', 'epoch', 'split', 'loss'],
    )


def summarize_training_log(points: Sequence[TrainLogPoint]) -> pd.DataFrame:
    """
    Resume cada combinação (estágio, partição): época e loss finais, loss mínima e contagem.

    Args:
        points: Pontos do log

    Returns:
        DataFrame com colunas stage, split, final_epoch, final_loss, min_loss, count
    """
    df = points_to_frame(points)
    if df.empty:
        return pd.DataFrame(columns=['stage', 'split', 'final_epoch', 'final_loss', 'min_loss', 'count'])

    # o último ponto de maior época é o "final"
    df = df.reset_index().sort_values(['stage', 'split', 'epoch', 'index'], kind='mergesort')
    grouped = df.groupby(['stage', 'split'], sort=True)
    summary = grouped.agg(
        final_epoch=('epoch', 'last'),
        final_loss=('loss', 'last'),
        min_loss=('loss', 'min'),
        count=('loss', 'size'),
    ).reset_index()
    return summary


def format_summary_lines(summary: pd.DataFrame) -> List[str]:
    """Linhas do tipo 'Final PT Loss: 2.12 (Epoch 4.0)'."""
    lines = []
    for row in summary.itertuples(index=False):
        prefix = 'Eval ' if row.split == Split.EVAL.value else ''
        lines.append(f"Final {row.stage} {prefix}Loss: {row.final_loss:.2f} (Epoch {row.final_epoch:.1f})")
    return lines


def plot_training_log(points: Sequence[TrainLogPoint], output_path: Union[str, Path]) -> Path:
    """
    Gera a curva de loss por época (treino e avaliação).

    Args:
        points: Pontos do log
        output_path: Arquivo de imagem de saída

    Returns:
        Caminho do arquivo gerado
    """
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    df = points_to_frame(points)
    output_path = Path(output_path)

    fig, ax = plt.subplots(figsize=(8, 5))
    for (stage, split), group in df.groupby(['stage', 'split'], sort=True):
        ax.plot(group['epoch'], group['loss'], marker='o', markersize=3,
                label=f"{stage} {split}", color=PLOT_CONFIG['colors'].get(split))
    ax.set_xlabel('Época')
    ax.set_ylabel('Loss')
    ax.set_title('Curva de treinamento')
    ax.grid(True, alpha=0.3)
    ax.legend()

    try:
        output_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(output_path, dpi=PLOT_CONFIG['dpi'], format=PLOT_CONFIG['format'],
                    bbox_inches='tight', facecolor='white',
                    metadata={'Software': None})
    except OSError as e:
        raise IoFailure(f"Falha ao salvar {output_path}: {e}") from e
    finally:
        plt.close(fig)

    Console.ok(f"Gráfico salvo: {output_path}")
    return output_path
