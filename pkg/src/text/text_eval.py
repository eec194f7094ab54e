"""
Módulo de métricas de avaliação de texto
BLEU-4 de corpus, ROUGE-1/2/L, acurácia de múltipla escolha, taxa de recusa
e auditoria de vazamento treino/avaliação por n-gramas.
"""

import json
import math
import re
import string
import unicodedata
from collections import Counter
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import partial
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import pandas as pd
from tqdm import tqdm

from config import (
    BLEU_CONFIG,
    LEAKAGE_CONFIG,
    MC_LETTERS,
    REFUSAL_MARKERS,
    REPORT_COLUMNS,
    TOKENIZER_DESCRIPTION,
)
from src.errors import EmptyCorpus, InvalidRecord, IoFailure
from src.text.chat_template import strip_think, think_stats
from src.utils.console import Console
from src.utils.formatters import Formatters
from src.utils.stats_utils import StatsUtils

_PUNCT = string.punctuation


class ScoredOn(str, Enum):
    RAW_TEXT = 'RawText'
    STRIPPED_ANSWER = 'StrippedAnswer'


@dataclass
class EvalRecord:
    """Linha de avaliação: prompt, geração, referência e opções de múltipla escolha."""

    id: str
    prompt: str
    generation: str
    reference: str
    options: Optional[Dict[str, str]] = None
    gold_letter: Optional[str] = None

    def __post_init__(self):
        if self.gold_letter is not None:
            if not self.options or self.gold_letter not in self.options:
                raise InvalidRecord(
                    f"Registro '{self.id}': gold_letter {self.gold_letter!r} fora das opções"
                )

    @classmethod
    def from_dict(cls, data: Dict[str, object], index: int = 0) -> 'EvalRecord':
        options = data.get('options') or None
        if options is not None and not isinstance(options, dict):
            raise InvalidRecord(f"Registro {index}: 'options' deve ser um objeto")
        gold = data.get('gold_letter')
        return cls(
            id=str(data.get('id', index)),
            prompt=str(data.get('prompt', '')),
            generation=str(data.get('generation', '')),
            reference=str(data.get('reference', '')),
            options={str(k): str(v) for k, v in options.items()} if options else None,
            gold_letter=str(gold) if gold else None,
        )

    def hypothesis(self, scored_on: ScoredOn) -> str:
        """Texto pontuado: geração crua ou apenas a resposta após o bloco <think>."""
        if scored_on == ScoredOn.RAW_TEXT:
            return self.generation
        return strip_think(self.generation).answer


class RougeScore(NamedTuple):
    precision: float
    recall: float
    f1: float


class McAccuracy(NamedTuple):
    accuracy: float
    correct: int
    unanswered: int
    n: int


@dataclass
class LeakReport:
    """Resultado da auditoria de vazamento."""

    exact_dups: int
    contaminated_eval: int
    contamination_fraction: float
    examples: List[Tuple[str, str]]
    n: int
    n_train: int
    n_eval: int

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data['examples'] = [list(e) for e in self.examples]
        return data


@dataclass
class MetricReport:
    """Pontuações de corpus (escala 0-100 para BLEU/ROUGE, 0-1 para frações)."""

    bleu4: float
    rouge1_f: float
    rouge2_f: float
    rougeL_f: float
    n_records: int
    scored_on: str
    mc_accuracy: Optional[float] = None
    mc_unanswered: Optional[int] = None
    refusal_rate: Optional[float] = None
    think_rate: float = 0.0
    smoothing: bool = False
    tokenizer: str = TOKENIZER_DESCRIPTION
    split: Optional[str] = None
    label: str = ''
    decoding: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> 'MetricReport':
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


# ---------------------------------------------------------------------------
# Tokenização
# ---------------------------------------------------------------------------

def normalize_text(text: str) -> str:
    """NFC + minúsculas + apóstrofo tipográfico convertido para ASCII."""
    return unicodedata.normalize('NFC', text).replace('’', "'").lower()


def tokenize(text: str) -> List[str]:
    """
    Tokeniza por espaços após NFC e minúsculas, removendo pontuação ASCII das bordas.

    Args:
        text: Texto bruto

    Returns:
        Lista de tokens não vazios
    """
    tokens = []
    for raw in normalize_text(text).split():
        token = raw.strip(_PUNCT)
        if token:
            tokens.append(token)
    return tokens


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------------
# BLEU / ROUGE
# ---------------------------------------------------------------------------

def bleu_stats(hypotheses: Sequence[str], references: Sequence[str],
               max_order: int = BLEU_CONFIG['max_order']) -> Dict[str, object]:
    """
    Acumula contagens de n-gramas recortadas sobre o corpus.

    Args:
        hypotheses: Textos gerados
        references: Textos de referência (um por hipótese)
        max_order: Maior ordem de n-grama

    Returns:
        Dicionário com matches, totals, hyp_len e ref_len
    """
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0

    for hyp, ref in zip(hypotheses, references):
        hyp_tokens, ref_tokens = tokenize(hyp), tokenize(ref)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, max_order + 1):
            hyp_counts = _ngrams(hyp_tokens, n)
            ref_counts = _ngrams(ref_tokens, n)
            matches[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
            totals[n - 1] += max(len(hyp_tokens) - n + 1, 0)

    return {'matches': matches, 'totals': totals, 'hyp_len': hyp_len, 'ref_len': ref_len}


def corpus_bleu(hypotheses: Sequence[str], references: Sequence[str],
                smooth: bool = BLEU_CONFIG['smooth'],
                max_order: int = BLEU_CONFIG['max_order']) -> float:
    """
    BLEU de corpus (0-100) com precisões modificadas agregadas.

    Ordens sem nenhum n-grama na hipótese ficam fora da média geométrica;
    qualquer precisão agregada nula zera o escore, exceto com suavização
    add-one, que vale para ordens ≥ 2.

    Args:
        hypotheses: Textos gerados
        references: Referências
        smooth: Suavização add-one nas ordens ≥ 2
        max_order: Maior ordem de n-grama

    Returns:
        Escore em [0, 100]
    """
    stats = bleu_stats(hypotheses, references, max_order)
    hyp_len, ref_len = stats['hyp_len'], stats['ref_len']
    if hyp_len == 0:
        return 0.0

    log_sum = 0.0
    orders = 0
    for n in range(1, max_order + 1):
        m, t = stats['matches'][n - 1], stats['totals'][n - 1]
        if t == 0:
            continue
        if smooth and n >= 2:
            m, t = m + 1, t + 1
        if m == 0:
            return 0.0
        log_sum += math.log(m / t)
        orders += 1

    if orders == 0:
        return 0.0

    bp = 1.0 if hyp_len >= ref_len else math.exp(1 - ref_len / hyp_len)
    score = 100.0 * bp * math.exp(log_sum / orders)
    return min(max(score, 0.0), 100.0)


def bleu4(records: Sequence[EvalRecord], scored_on: ScoredOn = ScoredOn.STRIPPED_ANSWER,
          smooth: bool = BLEU_CONFIG['smooth']) -> float:
    """
    BLEU-4 de corpus sobre registros de avaliação.

    Args:
        records: Registros (≥ 1)
        scored_on: Texto cru ou resposta sem bloco <think>
        smooth: Suavização add-one nas ordens ≥ 2

    Returns:
        Escore em [0, 100]

    Raises:
        EmptyCorpus: lista vazia
    """
    if not records:
        raise EmptyCorpus("BLEU-4 exige pelo menos um registro")
    return corpus_bleu([r.hypothesis(scored_on) for r in records],
                       [r.reference for r in records], smooth)


def _prf(overlap: int, hyp_total: int, ref_total: int, identical: bool = False) -> RougeScore:
    if identical and not (hyp_total and ref_total):
        return RougeScore(100.0, 100.0, 100.0)
    p = overlap / hyp_total if hyp_total else 0.0
    r = overlap / ref_total if ref_total else 0.0
    f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
    return RougeScore(100.0 * p, 100.0 * r, 100.0 * f1)


def _same_text(hyp: str, ref: str, hyp_tokens: List[str], ref_tokens: List[str]) -> bool:
    # Textos não vazios com os mesmos tokens valem 100 mesmo sem n-gramas contáveis
    return bool(hyp.strip()) and bool(ref.strip()) and hyp_tokens == ref_tokens


def rouge_n(hyp: str, ref: str, n: int) -> RougeScore:
    """
    ROUGE-N com sobreposição recortada pelo multiconjunto da referência.

    Args:
        hyp: Hipótese
        ref: Referência
        n: Ordem (1 ou 2)

    Returns:
        RougeScore (precision, recall, f1) em escala 0-100
    """
    if n not in (1, 2):
        raise ValueError(f"ROUGE-N suporta n=1 ou n=2 (recebido {n})")
    hyp_tokens, ref_tokens = tokenize(hyp), tokenize(ref)
    hyp_counts = _ngrams(hyp_tokens, n)
    ref_counts = _ngrams(ref_tokens, n)
    overlap = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    return _prf(overlap, sum(hyp_counts.values()), sum(ref_counts.values()),
                _same_text(hyp, ref, hyp_tokens, ref_tokens))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Comprimento da maior subsequência comum (programação dinâmica em duas linhas)."""
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0]
        for j, token_b in enumerate(b, start=1):
            if token_a == token_b:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(hyp: str, ref: str) -> RougeScore:
    """
    ROUGE-L pela maior subsequência comum de tokens.

    Args:
        hyp: Hipótese
        ref: Referência

    Returns:
        RougeScore (precision, recall, f1) em escala 0-100
    """
    hyp_tokens, ref_tokens = tokenize(hyp), tokenize(ref)
    return _prf(lcs_length(hyp_tokens, ref_tokens), len(hyp_tokens), len(ref_tokens),
                _same_text(hyp, ref, hyp_tokens, ref_tokens))


# ---------------------------------------------------------------------------
# Múltipla escolha e recusa
# ---------------------------------------------------------------------------

_LETTER_PATTERN = re.compile(r'(?<![A-Za-z0-9])([A-E])(?![A-Za-z0-9])(?:[.):])?')


def mc_extract(generation: str, options: Dict[str, str]) -> Optional[str]:
    """
    Extrai a letra escolhida de uma geração de múltipla escolha.

    Cascata sobre a resposta sem bloco <think>:
    (1) primeira letra de opção isolada (opcionalmente seguida de '.', ')' ou ':');
    (2) senão, a única opção cujo texto completo aparece literalmente (sem caixa);
    (3) senão, nenhuma.

    Args:
        generation: Texto gerado
        options: Mapa letra → texto da opção

    Returns:
        Letra extraída ou None
    """
    answer = strip_think(generation).answer
    valid = {k for k in options if k in MC_LETTERS}

    for match in _LETTER_PATTERN.finditer(answer):
        if match.group(1) in valid:
            return match.group(1)

    lowered = answer.casefold()
    hits = [k for k, text in sorted(options.items())
            if text.strip() and text.strip().casefold() in lowered]
    if len(hits) == 1:
        return hits[0]
    return None


def mc_accuracy(records: Sequence[EvalRecord]) -> McAccuracy:
    """
    Fração de registros cuja letra extraída é a correta.

    Falha de extração conta como erro e é reportada em unanswered.

    Args:
        records: Registros com gold_letter

    Returns:
        McAccuracy(accuracy, correct, unanswered, n)
    """
    if not records:
        raise EmptyCorpus("Acurácia de múltipla escolha exige pelo menos um registro")
    correct = unanswered = 0
    for record in records:
        if record.gold_letter is None or not record.options:
            raise InvalidRecord(f"Registro '{record.id}' sem gold_letter/options")
        letter = mc_extract(record.generation, record.options)
        if letter is None:
            unanswered += 1
        elif letter == record.gold_letter:
            correct += 1
    return McAccuracy(correct / len(records), correct, unanswered, len(records))


def refusal_rate(records: Sequence[EvalRecord],
                 refusal_markers: Optional[Sequence[str]] = None) -> float:
    """
    Fração de respostas que contêm pelo menos um marcador de recusa.

    Args:
        records: Registros do conjunto de sondagem
        refusal_markers: Marcadores (padrão REFUSAL_MARKERS); busca sem caixa

    Returns:
        Fração em [0, 1]
    """
    if not records:
        raise EmptyCorpus("Taxa de recusa exige pelo menos um registro")
    markers = list(REFUSAL_MARKERS if refusal_markers is None else refusal_markers)
    if not markers:
        raise ValueError("Lista de marcadores de recusa vazia")
    markers = [normalize_text(m) for m in markers]

    flagged = 0
    for record in records:
        answer = normalize_text(strip_think(record.generation).answer)
        if any(m in answer for m in markers):
            flagged += 1
    return flagged / len(records)


# ---------------------------------------------------------------------------
# Auditoria de vazamento
# ---------------------------------------------------------------------------

def leakage_audit(train_texts: Sequence[str], eval_texts: Sequence[str],
                  n: int = LEAKAGE_CONFIG['ngram'],
                  eval_ids: Optional[Sequence[str]] = None,
                  show_progress: bool = False) -> LeakReport:
    """
    Detecta textos de avaliação duplicados ou com n-gramas presentes no treino.

    Args:
        train_texts: Documentos de treino
        eval_texts: Textos de avaliação
        n: Tamanho da janela de n-gramas (padrão 13)
        eval_ids: Identificadores dos textos de avaliação (padrão: índice)
        show_progress: Exibe barra de progresso na indexação do treino

    Returns:
        LeakReport com duplicatas exatas, textos contaminados e exemplos
    """
    if n < 1:
        raise ValueError(f"Janela de n-gramas deve ser ≥ 1 (recebido {n})")
    if not train_texts or not eval_texts:
        raise EmptyCorpus("Auditoria de vazamento exige textos de treino e de avaliação")
    ids = [str(i) for i in range(len(eval_texts))] if eval_ids is None else [str(i) for i in eval_ids]

    train_exact = set()
    train_ngrams = set()
    for text in tqdm(train_texts, desc='indexando treino', disable=not show_progress):
        tokens = tokenize(text)
        train_exact.add(' '.join(tokens))
        train_ngrams.update(_ngrams(tokens, n))

    exact_dups = contaminated = 0
    examples: List[Tuple[str, str]] = []
    for eval_id, text in zip(ids, eval_texts):
        tokens = tokenize(text)
        if ' '.join(tokens) in train_exact:
            exact_dups += 1
        for i in range(len(tokens) - n + 1):
            gram = tuple(tokens[i:i + n])
            if gram in train_ngrams:
                contaminated += 1
                if len(examples) < LEAKAGE_CONFIG['max_examples']:
                    examples.append((eval_id, ' '.join(gram)))
                break

    fraction = contaminated / len(eval_texts)
    if contaminated:
        Console.warn(f"{contaminated} de {len(eval_texts)} textos de avaliação contaminados (n={n})")
    else:
        Console.ok(f"Nenhum n-grama de tamanho {n} compartilhado com o treino")

    return LeakReport(
        exact_dups=exact_dups,
        contaminated_eval=contaminated,
        contamination_fraction=fraction,
        examples=examples,
        n=n,
        n_train=len(train_texts),
        n_eval=len(eval_texts),
    )


# ---------------------------------------------------------------------------
# Relatórios
# ---------------------------------------------------------------------------

def score_records(records: Sequence[EvalRecord],
                  scored_on: ScoredOn = ScoredOn.STRIPPED_ANSWER,
                  smooth: bool = BLEU_CONFIG['smooth'],
                  refusal_markers: Optional[Sequence[str]] = None,
                  with_refusal: bool = False,
                  split: Optional[str] = None,
                  label: str = '',
                  decoding: Optional[Dict[str, float]] = None) -> MetricReport:
    """
    Calcula o relatório completo de métricas de um conjunto de registros.

    ROUGE de corpus é a média dos F1 por registro. A acurácia de múltipla
    escolha usa apenas os registros com gold_letter.

    Args:
        records: Registros (≥ 1)
        scored_on: Texto cru ou resposta sem bloco <think>
        smooth: Suavização add-one no BLEU
        refusal_markers: Marcadores de recusa personalizados
        with_refusal: Calcula a taxa de recusa
        split: Rótulo opaco da partição avaliada
        label: Rótulo da execução
        decoding: Preset de decodificação (apenas metadado)

    Returns:
        MetricReport
    """
    if not records:
        raise EmptyCorpus("Relatório de métricas exige pelo menos um registro")
    scored_on = ScoredOn(scored_on)

    hyps = [r.hypothesis(scored_on) for r in records]
    refs = [r.reference for r in records]

    r1 = [rouge_n(h, ref, 1).f1 for h, ref in zip(hyps, refs)]
    r2 = [rouge_n(h, ref, 2).f1 for h, ref in zip(hyps, refs)]
    rl = [rouge_l(h, ref).f1 for h, ref in zip(hyps, refs)]

    mc_records = [r for r in records if r.gold_letter is not None]
    mc = mc_accuracy(mc_records) if mc_records else None

    refusal = None
    if with_refusal or refusal_markers is not None:
        refusal = refusal_rate(records, refusal_markers)

    return MetricReport(
        bleu4=corpus_bleu(hyps, refs, smooth),
        rouge1_f=StatsUtils.stable_mean(r1),
        rouge2_f=StatsUtils.stable_mean(r2),
        rougeL_f=StatsUtils.stable_mean(rl),
        n_records=len(records),
        scored_on=scored_on.value,
        mc_accuracy=mc.accuracy if mc else None,
        mc_unanswered=mc.unanswered if mc else None,
        refusal_rate=refusal,
        think_rate=think_stats(r.generation for r in records)['think_rate'],
        smoothing=smooth,
        split=split,
        label=label,
        decoding=dict(decoding or {}),
    )


def think_penalty(records: Sequence[EvalRecord], smooth: bool = BLEU_CONFIG['smooth'],
                  label: str = '') -> Dict[str, object]:
    """
    Pontua as mesmas gerações com e sem o bloco <think> para medir a penalidade.

    Args:
        records: Registros
        smooth: Suavização add-one no BLEU
        label: Rótulo da execução

    Returns:
        Dicionário com relatórios raw/stripped e diferenças por métrica
    """
    raw = score_records(records, ScoredOn.RAW_TEXT, smooth, label=label)
    stripped = score_records(records, ScoredOn.STRIPPED_ANSWER, smooth, label=label)
    return {
        'raw': raw,
        'stripped': stripped,
        'delta_bleu4': stripped.bleu4 - raw.bleu4,
        'delta_rouge1_f': stripped.rouge1_f - raw.rouge1_f,
        'delta_rouge2_f': stripped.rouge2_f - raw.rouge2_f,
        'delta_rougeL_f': stripped.rougeL_f - raw.rougeL_f,
    }


def load_records(path: Union[str, Path]) -> List[EvalRecord]:
    """
    Carrega registros de avaliação de um arquivo JSONL.

    Args:
        path: Arquivo com um EvalRecord por linha

    Returns:
        Lista de EvalRecord
    """
    records = []
    try:
        with open(path, 'r', encoding='utf-8') as f:
            for i, line in enumerate(f):
                if not line.strip():
                    continue
                try:
                    data = json.loads(line)
                except json.JSONDecodeError as e:
                    raise InvalidRecord(f"{path}: linha {i + 1} não é JSON válido") from e
                if not isinstance(data, dict):
                    raise InvalidRecord(f"{path}: linha {i + 1} não é um objeto")
                records.append(EvalRecord.from_dict(data, index=i))
    except OSError as e:
        raise IoFailure(f"Falha ao ler {path}: {e}") from e
    Console.ok(f"{len(records)} registros carregados de {Path(path).name}")
    return records


def metric_table(reports: Sequence[MetricReport], labels: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """
    Monta a tabela comparativa (uma linha por execução).

    Colunas na ordem BLEU-4, R-1, R-2, R-L; MC-Acc e Refusal só aparecem
    quando algum relatório as possui.

    Args:
        reports: Relatórios de métricas
        labels: Rótulos das linhas (padrão: label de cada relatório)

    Returns:
        DataFrame com os escores arredondados
    """
    labels = list(labels) if labels is not None else [r.label or f"run{i}" for i, r in enumerate(reports)]
    rows = []
    for label, report in zip(labels, reports):
        row = {'Run': label}
        for key, column in REPORT_COLUMNS.items():
            row[column] = getattr(report, key)
        rows.append(row)

    df = pd.DataFrame(rows, columns=['Run'] + list(REPORT_COLUMNS.values()))
    for optional in (REPORT_COLUMNS['mc_accuracy'], REPORT_COLUMNS['refusal_rate']):
        if df[optional].isna().all():
            df = df.drop(columns=[optional])
    return df


def format_metric_table(reports: Sequence[MetricReport], labels: Optional[Sequence[str]] = None) -> str:
    """
    Renderiza a tabela comparativa como texto alinhado.

    Args:
        reports: Relatórios de métricas
        labels: Rótulos das linhas

    Returns:
        Tabela em texto puro
    """
    df = metric_table(reports, labels)
    formatters = {}
    for column in df.columns:
        if column == 'Run':
            continue
        decimals = 3 if column in (REPORT_COLUMNS['mc_accuracy'], REPORT_COLUMNS['refusal_rate']) else 2
        formatters[column] = partial(Formatters.format_number, decimals=decimals)
    return df.to_string(index=False, formatters=formatters)
