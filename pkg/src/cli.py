"""
Interface de linha de comando do MesclaLoRA

Uso:
    python mescla.py merge --base BASE --spec SPEC.json --out DIR [--force]
    python mescla.py merge --base BASE --pt PT --sft SFT --out DIR
    python mescla.py sweep --base BASE --pt PT --sft SFT --out DIR [--alphas 0,0.5,1]
    python mescla.py verify --base BASE --spec SPEC.json --candidate FILE
    python mescla.py attribute --base BASE --adapters PT SFT --candidate FILE
    python mescla.py classify --base BASE --adapters PT SFT --candidate FILE [--spec SPEC.json]
    python mescla.py fingerprint FILE [FILE ...]
    python mescla.py check-dir DIR --base BASE --spec SPEC.json
    python mescla.py lint --train-template X --eval-template Y --generations FILE
    python mescla.py render --template ID --messages FILE
    python mescla.py eval RECORDS.jsonl [--scored-on raw|stripped] [--smooth]
    python mescla.py leak-audit --train FILE --eval FILE [--n 13]
    python mescla.py report REPORT.json [REPORT.json ...]
    python mescla.py train-log FILE --stage PT|SFT [--plot PNG]

Saída para máquinas (JSON, tabelas) vai para stdout; diagnósticos para stderr.
Códigos de saída: 0 sucesso, 2 falha de verificação/achado, 3 erro estrutural ou de E/S.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from config import (
    DECODING_PRESETS,
    DEFAULT_MERGE,
    DTYPE_CONFIG,
    EXIT_CODES,
    LEAKAGE_CONFIG,
    MERGED_NAME,
    SOURCE_DATE_ENV_VAR,
    TEMPLATE_IDS,
    TOLERANCE_ENV_VAR,
    resolve_tolerance_profile,
)
from src import __version__
from src.data.training_log import (
    format_summary_lines,
    parse_training_log,
    plot_training_log,
    summarize_training_log,
)
from src.errors import InvalidRecord, IoFailure, MesclaError
from src.guard import (
    Finding,
    RunManifest,
    all_clean,
    build_manifest,
    check_export_dir,
    fingerprint,
    lint_templates,
    read_manifest,
    write_manifest,
)
from src.merge import (
    LoraAdapter,
    MergeSpec,
    alpha_sweep,
    apply_merge,
    classify_checkpoint,
    default_hypotheses,
    infer_mix_weights,
    load_adapter,
    load_merge_spec,
    tolerance_profile,
    verify_merge,
)
from src.store import read_store, write_store
from src.text import (
    Message,
    MetricReport,
    ScoredOn,
    format_metric_table,
    leakage_audit,
    load_records,
    render,
    score_records,
    think_penalty,
)
from src.utils import Console, DateUtils, Formatters

COMMANDS = (
    'merge', 'sweep', 'verify', 'attribute', 'classify', 'fingerprint', 'check-dir',
    'lint', 'render', 'eval', 'leak-audit', 'report', 'train-log',
)


@dataclass
class RunConfig:
    """Configuração resolvida de uma execução (arquivo de config + flags)."""

    subcommand: str
    inputs: List[str] = field(default_factory=list)
    base: Optional[str] = None
    spec_path: Optional[str] = None
    adapters: List[str] = field(default_factory=list)
    candidate: Optional[str] = None
    template_id: str = TEMPLATE_IDS['nothink']
    tol_abs: Optional[float] = None
    tol_rel: Optional[float] = None
    out_dir: Optional[str] = None
    force: bool = False
    json_output: bool = False
    quiet: bool = False
    options: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in COMMANDS:
            raise ValueError(f"Subcomando desconhecido: {self.subcommand}")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'RunConfig':
        values = dict(vars(args))
        values.pop('config', None)
        own = {
            'subcommand': values.pop('command'),
            'inputs': list(values.pop('inputs', None) or []),
            'base': values.pop('base', None),
            'spec_path': values.pop('spec', None),
            'adapters': list(values.pop('adapters', None) or []),
            'candidate': values.pop('candidate', None),
            'template_id': values.pop('template', None) or TEMPLATE_IDS['nothink'],
            'tol_abs': values.pop('tol_abs', None),
            'tol_rel': values.pop('tol_rel', None),
            'out_dir': values.pop('out', None),
            'force': bool(values.pop('force', False)),
            'json_output': bool(values.pop('json', False)),
            'quiet': bool(values.pop('quiet', False)),
        }
        return cls(options=values, **own)

    def opt(self, key: str, default=None):
        value = self.options.get(key)
        return default if value is None else value


# ---------------------------------------------------------------------------
# Auxiliares
# ---------------------------------------------------------------------------

def _emit(config: RunConfig, payload: object, text: Optional[str] = None) -> None:
    """Escreve o resultado em stdout: JSON com --json, texto caso contrário."""
    if config.json_output or text is None:
        print(json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False))
    else:
        print(text)


def _require(value, flag: str):
    if value in (None, '', []):
        raise ValueError(f"Parâmetro obrigatório ausente: {flag}")
    return value


def _decoding(config: RunConfig) -> Dict[str, float]:
    preset = str(config.opt('decoding', 'B')).upper()
    if preset not in DECODING_PRESETS:
        raise ValueError(f"Preset de decodificação desconhecido: {preset} (use {sorted(DECODING_PRESETS)})")
    return dict(DECODING_PRESETS[preset])


def _load_spec(config: RunConfig) -> MergeSpec:
    """MergeSpec de --spec ou do par --pt/--sft (pesos 0.3/0.7 por padrão)."""
    dtype = config.opt('dtype')
    if config.spec_path:
        spec = load_merge_spec(config.spec_path)
    else:
        pt = load_adapter(_require(config.opt('pt'), '--pt'))
        sft = load_adapter(_require(config.opt('sft'), '--sft'))
        w_pt = float(config.opt('w_pt', DEFAULT_MERGE['pt']))
        w_sft = float(config.opt('w_sft', DEFAULT_MERGE['sft']))
        spec = MergeSpec(entries=[(pt, w_pt), (sft, w_sft)], label=f"pt{w_pt:g}/sft{w_sft:g}")
    if dtype:
        spec.output_dtype = str(dtype).upper()
    spec.validate()
    return spec


def _load_adapters(config: RunConfig) -> List[LoraAdapter]:
    paths = _require(config.adapters, '--adapters')
    return [load_adapter(p) for p in paths]


def _manifest_for(base, spec: MergeSpec, config: RunConfig,
                  created_at: Optional[str] = None) -> RunManifest:
    return build_manifest(
        base,
        {adapter.name: adapter.to_store() for adapter, _ in spec.sorted_entries()},
        spec.weights(),
        config.template_id,
        _decoding(config),
        created_at=created_at,
    )


def _created_at_flag(config: RunConfig) -> Optional[str]:
    """--created-at normalizado para ISO 8601 UTC."""
    text = config.opt('created_at')
    if not text:
        return None
    ts = DateUtils.parse_utc(str(text))
    if ts is None:
        raise ValueError(f"--created-at inválido: {text!r}")
    return DateUtils.format_utc(ts)


def _stable_created_at(out_dir: Path, manifest: RunManifest, explicit: Optional[str]) -> str:
    """Reaproveita o instante de um manifesto equivalente para manter a saída idêntica."""
    if explicit:
        return explicit
    if not os.environ.get(SOURCE_DATE_ENV_VAR):
        stored = read_manifest(out_dir) if out_dir.exists() else None
        if stored is not None and stored.digest == manifest.digest and stored.created_at:
            return stored.created_at
    return manifest.created_at


def _print_findings(findings: Sequence[Finding]) -> None:
    for finding in findings:
        if finding.is_clean:
            Console.ok(f"{finding.kind.value}: {finding.message}")
        else:
            Console.warn(f"{finding.kind.value}: {finding.message}")


def _findings_text(findings: Sequence[Finding]) -> str:
    return '\n'.join(f"{f.kind.value}\t{f.message}" for f in findings)


def _read_texts(path: str, text_field: str) -> Tuple[List[str], List[str]]:
    """Textos e ids de um arquivo JSONL (campo escolhido) ou de texto puro (uma linha por texto)."""
    texts, ids = [], []
    try:
        with open(path, 'r', encoding='utf-8') as f:
            for i, line in enumerate(f):
                if not line.strip():
                    continue
                try:
                    data = json.loads(line)
                except json.JSONDecodeError:
                    data = None
                if isinstance(data, dict):
                    if text_field not in data:
                        raise InvalidRecord(f"{path}: linha {i + 1} sem o campo '{text_field}'")
                    texts.append(str(data[text_field]))
                    ids.append(str(data.get('id', i)))
                else:
                    texts.append(line.rstrip('\n'))
                    ids.append(str(i))
    except OSError as e:
        raise IoFailure(f"Falha ao ler {path}: {e}") from e
    return texts, ids


# ---------------------------------------------------------------------------
# Subcomandos
# ---------------------------------------------------------------------------

def _export(base, spec: MergeSpec, out_dir: Path, config: RunConfig) -> Tuple[int, Dict[str, object]]:
    """Checa o diretório, mescla e grava checkpoint + manifesto."""
    created_at = _created_at_flag(config)
    manifest = _manifest_for(base, spec, config, created_at=created_at)
    findings = check_export_dir(out_dir, manifest)
    if not all_clean(findings):
        _print_findings(findings)
        if not config.force:
            Console.error(f"Exportação recusada em {out_dir} (use --force para sobrescrever)")
            return EXIT_CODES['finding'], {
                'written': False, 'out': str(out_dir),
                'findings': [f.to_dict() for f in findings],
            }
        Console.warn("--force: sobrescrevendo exportação existente")

    if all_clean(findings):
        manifest.created_at = _stable_created_at(out_dir, manifest, created_at)

    Console.step(f"Mesclando {spec.label or 'especificação'} → {spec.output_dtype}")
    merged = apply_merge(base, spec, workers=config.opt('workers'))
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out_dir / MERGED_NAME
    write_store(merged, checkpoint)
    write_manifest(out_dir, manifest)
    Console.ok(f"Checkpoint salvo: {checkpoint}")

    return EXIT_CODES['ok'], {
        'written': True, 'out': str(out_dir), 'checkpoint': str(checkpoint),
        'label': spec.label, 'weights': spec.weights(),
        'fingerprint': fingerprint(merged).to_dict(), 'manifest_digest': manifest.digest,
    }


def cmd_merge(config: RunConfig) -> int:
    Console.section("MESCLA DE ADAPTADORES")
    base = read_store(_require(config.base, '--base'))
    spec = _load_spec(config)
    code, result = _export(base, spec, Path(_require(config.out_dir, '--out')), config)
    _emit(config, result, None if config.json_output else
          f"{'gravado' if result['written'] else 'recusado'}\t{result['out']}")
    return code


def cmd_sweep(config: RunConfig) -> int:
    Console.section("VARREDURA DE PESOS PT/SFT")
    base = read_store(_require(config.base, '--base'))
    pt = load_adapter(_require(config.opt('pt'), '--pt'))
    sft = load_adapter(_require(config.opt('sft'), '--sft'))
    alphas = config.opt('alphas')
    grid = [float(a) for a in str(alphas).split(',')] if alphas else None
    out_root = Path(_require(config.out_dir, '--out'))

    results = []
    code = EXIT_CODES['ok']
    for w_pt, spec in alpha_sweep(pt, sft, grid, str(config.opt('dtype', 'F32')).upper()):
        subdir = out_root / spec.label.replace('/', '_')
        sub_code, result = _export(base, spec, subdir, config)
        code = max(code, sub_code)
        result['alpha'] = w_pt
        results.append(result)

    _emit(config, results, '\n'.join(
        f"{r['alpha']:g}\t{'gravado' if r['written'] else 'recusado'}\t{r['out']}" for r in results))
    return code


def _tolerances(config: RunConfig) -> Tuple[Optional[float], Optional[float]]:
    tol_abs, tol_rel = config.tol_abs, config.tol_rel
    if (tol_abs is None or tol_rel is None) and os.environ.get(TOLERANCE_ENV_VAR):
        env_abs, env_rel = tolerance_profile(resolve_tolerance_profile())
        tol_abs = env_abs if tol_abs is None else tol_abs
        tol_rel = env_rel if tol_rel is None else tol_rel
    return tol_abs, tol_rel


def cmd_verify(config: RunConfig) -> int:
    Console.section("VERIFICAÇÃO DA EXPORTAÇÃO")
    base = read_store(_require(config.base, '--base'))
    spec = _load_spec(config)
    candidate = read_store(_require(config.candidate, '--candidate'))
    tol_abs, tol_rel = _tolerances(config)

    report = verify_merge(base, spec, candidate, tol_abs, tol_rel)

    lines = [f"{report.verdict}\t{spec.label}"]
    for name, stats in report.per_tensor.items():
        flag = '❌' if name in report.failing_tensors else '✅'
        lines.append(f"{flag} {name}\tabs={Formatters.format_error(stats['max_abs_err'])}"
                     f"\trel={Formatters.format_error(stats['max_rel_err'])}")
    _emit(config, report.to_dict(), '\n'.join(lines))
    return EXIT_CODES['ok'] if report.passed else EXIT_CODES['finding']


def _attribution_text(report) -> str:
    lines = [f"{name}\t{Formatters.format_weight(w)}" for name, w in report.inferred_weights.items()]
    lines.append(f"residual_rms\t{Formatters.format_error(report.residual_rms)}")
    if report.degenerate:
        lines.append(f"degenerate\tcond={Formatters.format_error(report.condition)}")
    if report.best_hypothesis:
        lines.append(f"best_hypothesis\t{report.best_hypothesis}")
    return '\n'.join(lines)


def cmd_attribute(config: RunConfig) -> int:
    Console.section("ATRIBUIÇÃO DE PESOS")
    base = read_store(_require(config.base, '--base'))
    adapters = _load_adapters(config)
    candidate = read_store(_require(config.candidate, '--candidate'))
    report = infer_mix_weights(base, adapters, candidate, strict=bool(config.opt('strict', False)))
    _emit(config, report.to_dict(), _attribution_text(report))
    return EXIT_CODES['ok']


def cmd_classify(config: RunConfig) -> int:
    Console.section("CLASSIFICAÇÃO DE CHECKPOINT")
    base = read_store(_require(config.base, '--base'))
    adapters = _load_adapters(config)
    candidate = read_store(_require(config.candidate, '--candidate'))

    declared = None
    if config.spec_path:
        # a hipótese declarada usa as mesmas instâncias de adaptador
        loaded = load_merge_spec(config.spec_path)
        by_name = {a.name: a for a in adapters}
        declared = MergeSpec(
            entries=[(by_name.get(a.name, a), w) for a, w in loaded.entries],
            label=loaded.label or 'declared',
        )
    report = classify_checkpoint(base, adapters, candidate, default_hypotheses(adapters, declared))

    text = _attribution_text(report) + '\n' + '\n'.join(
        f"  {label}\t{Formatters.format_error(r)}" for label, r in report.hypothesis_residuals.items())
    _emit(config, report.to_dict(), text)
    return EXIT_CODES['ok']


def cmd_fingerprint(config: RunConfig) -> int:
    paths = _require(config.inputs, 'FILE')
    results = {}
    for path in paths:
        fp = fingerprint(read_store(path))
        Console.info(f"{Path(path).name}: {fp.name_count} tensores, "
                     f"{Formatters.format_bytes(fp.total_bytes)}, {Formatters.format_digest(fp.digest)}")
        results[path] = fp.to_dict()
    _emit(config, results, '\n'.join(
        f"{fp['digest']}  {path}" for path, fp in results.items()))
    return EXIT_CODES['ok']


def cmd_check_dir(config: RunConfig) -> int:
    directory = Path(_require(config.inputs, 'DIR')[0])
    manifest_file = config.opt('manifest')
    if manifest_file:
        try:
            with open(manifest_file, 'r', encoding='utf-8') as f:
                manifest = RunManifest.from_dict(json.load(f))
        except OSError as e:
            raise IoFailure(f"Falha ao ler {manifest_file}: {e}") from e
    else:
        base = read_store(_require(config.base, '--base'))
        manifest = _manifest_for(base, _load_spec(config), config)

    findings = check_export_dir(directory, manifest)
    _print_findings(findings)
    _emit(config, [f.to_dict() for f in findings], _findings_text(findings))
    return EXIT_CODES['ok'] if all_clean(findings) else EXIT_CODES['finding']


def cmd_lint(config: RunConfig) -> int:
    generations: List[str] = []
    if config.opt('generations'):
        generations, _ = _read_texts(config.opt('generations'), 'generation')
    findings = lint_templates(
        _require(config.opt('train_template'), '--train-template'),
        _require(config.opt('eval_template'), '--eval-template'),
        generations,
    )
    _print_findings(findings)
    _emit(config, [f.to_dict() for f in findings], _findings_text(findings))
    return EXIT_CODES['ok'] if all_clean(findings) else EXIT_CODES['finding']


def cmd_render(config: RunConfig) -> int:
    path = _require(config.opt('messages'), '--messages')
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except OSError as e:
        raise IoFailure(f"Falha ao ler {path}: {e}") from e
    if not isinstance(raw, list):
        raise InvalidRecord(f"{path} deve conter uma lista de mensagens")
    messages = [Message.from_dict(m) for m in raw]
    prompt = render(messages, config.template_id,
                    add_generation_prompt=not config.opt('no_generation_prompt', False))
    _emit(config, {'template': config.template_id, 'prompt': prompt}, prompt)
    return EXIT_CODES['ok']


def cmd_eval(config: RunConfig) -> int:
    Console.section("AVALIAÇÃO DE MÉTRICAS")
    records = load_records(_require(config.inputs, 'RECORDS')[0])
    smooth = bool(config.opt('smooth', False))
    label = str(config.opt('label', ''))

    if config.opt('think_penalty'):
        result = think_penalty(records, smooth, label=label)
        payload = {k: (v.to_dict() if isinstance(v, MetricReport) else v) for k, v in result.items()}
        text = format_metric_table([result['raw'], result['stripped']], ['raw', 'stripped'])
        _emit(config, payload, text)
        return EXIT_CODES['ok']

    scored_on = ScoredOn.RAW_TEXT if str(config.opt('scored_on', 'stripped')).lower() == 'raw' \
        else ScoredOn.STRIPPED_ANSWER
    markers = config.opt('refusal_markers')
    report = score_records(
        records, scored_on, smooth,
        refusal_markers=[m.strip() for m in str(markers).split(',') if m.strip()] if markers else None,
        with_refusal=bool(config.opt('refusal', False)),
        split=config.opt('split'),
        label=label,
        decoding=_decoding(config),
    )
    # o relatório em JSON é a entrada do subcomando report
    _emit(config, report.to_dict(), report.to_json() if not config.opt('table') else
          format_metric_table([report]))
    return EXIT_CODES['ok']


def cmd_leak_audit(config: RunConfig) -> int:
    Console.section("AUDITORIA DE VAZAMENTO")
    train, _ = _read_texts(_require(config.opt('train'), '--train'), str(config.opt('train_field', 'text')))
    eval_texts, eval_ids = _read_texts(_require(config.opt('eval'), '--eval'),
                                       str(config.opt('eval_field', 'prompt')))
    report = leakage_audit(train, eval_texts, int(config.opt('n', LEAKAGE_CONFIG['ngram'])),
                           eval_ids, show_progress=not config.quiet)
    text = '\n'.join([
        f"exact_dups\t{report.exact_dups}",
        f"contaminated_eval\t{report.contaminated_eval}",
        f"contamination\t{Formatters.format_percentage(report.contamination_fraction)}",
    ] + [f"  {i}\t{span}" for i, span in report.examples])
    _emit(config, report.to_dict(), text)
    dirty = report.contaminated_eval or report.exact_dups
    return EXIT_CODES['finding'] if dirty else EXIT_CODES['ok']


def cmd_report(config: RunConfig) -> int:
    reports, labels = [], []
    for path in _require(config.inputs, 'REPORT'):
        try:
            with open(path, 'r', encoding='utf-8') as f:
                report = MetricReport.from_dict(json.load(f))
        except OSError as e:
            raise IoFailure(f"Falha ao ler {path}: {e}") from e
        except (json.JSONDecodeError, TypeError) as e:
            raise InvalidRecord(f"{path} não é um relatório de métricas válido: {e}") from e
        reports.append(report)
        labels.append(report.label or Path(path).stem)

    custom = config.opt('labels')
    if custom:
        labels = [s.strip() for s in str(custom).split(',')]
        if len(labels) != len(reports):
            raise ValueError(f"{len(labels)} rótulos para {len(reports)} relatórios")

    table = format_metric_table(reports, labels)
    payload = [dict(r.to_dict(), label=l) for r, l in zip(reports, labels)]
    _emit(config, payload, table)
    return EXIT_CODES['ok']


def cmd_train_log(config: RunConfig) -> int:
    points = parse_training_log(_require(config.inputs, 'FILE')[0], config.opt('stage', 'PT'))
    summary = summarize_training_log(points)
    if config.opt('plot'):
        plot_training_log(points, config.opt('plot'))
    text = '\n'.join(format_summary_lines(summary))
    _emit(config, summary.to_dict(orient='records'), text)
    return EXIT_CODES['ok']


HANDLERS = {
    'merge': cmd_merge,
    'sweep': cmd_sweep,
    'verify': cmd_verify,
    'attribute': cmd_attribute,
    'classify': cmd_classify,
    'fingerprint': cmd_fingerprint,
    'check-dir': cmd_check_dir,
    'lint': cmd_lint,
    'render': cmd_render,
    'eval': cmd_eval,
    'leak-audit': cmd_leak_audit,
    'report': cmd_report,
    'train-log': cmd_train_log,
}


def run(config: RunConfig) -> int:
    """
    Executa um subcomando e mapeia o resultado para o código de saída.

    Args:
        config: Configuração resolvida

    Returns:
        0 sucesso, 2 falha/achado, 3 erro estrutural ou de E/S
    """
    Console.set_quiet(config.quiet)
    try:
        return HANDLERS[config.subcommand](config)
    except (MesclaError, OSError, ValueError, KeyError) as e:
        Console.error(f"Erro: {e}")
        return EXIT_CODES['structural']


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--json', action='store_true', help='Saída em JSON')
    common.add_argument('--quiet', action='store_true', help='Silencia os diagnósticos em stderr')
    common.add_argument('--config', help='Arquivo JSON com valores padrão para as flags')
    return common


def _add_merge_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument('--base', help='Checkpoint base (.safetensors)')
    p.add_argument('--spec', help='Especificação de mescla (JSON)')
    p.add_argument('--pt', help='Adaptador de pré-treino')
    p.add_argument('--sft', help='Adaptador de ajuste supervisionado')
    p.add_argument('--w-pt', type=float, help=f"Peso do PT (padrão {DEFAULT_MERGE['pt']})")
    p.add_argument('--w-sft', type=float, help=f"Peso do SFT (padrão {DEFAULT_MERGE['sft']})")
    p.add_argument('--dtype', choices=sorted(DTYPE_CONFIG), type=str.upper, help='Dtype de saída')
    p.add_argument('--template', choices=sorted(TEMPLATE_IDS.values()), help='Template de chat da avaliação')
    p.add_argument('--decoding', choices=sorted(DECODING_PRESETS), help='Preset de decodificação')


class _Parser(argparse.ArgumentParser):
    """Erros de uso saem com o código estrutural, não com o 2 do argparse."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        Console.error(f"Erro: {message}")
        sys.exit(EXIT_CODES['structural'])


def build_parser(defaults: Optional[Dict[str, object]] = None) -> argparse.ArgumentParser:
    """
    Monta o parser com todos os subcomandos.

    Args:
        defaults: Valores padrão vindos do arquivo --config

    Returns:
        ArgumentParser pronto
    """
    common = _common_parser()
    parser = _Parser(
        prog='mescla',
        description='Mescla ponderada de adaptadores LoRA, auditoria de exportações e métricas de avaliação',
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('merge', parents=[common], help='Exporta base + Σ wᵢ·ΔWᵢ')
    _add_merge_inputs(p)
    p.add_argument('--out', help='Diretório de exportação')
    p.add_argument('--force', action='store_true', help='Sobrescreve exportação de outra execução')
    p.add_argument('--workers', type=int, help='Threads para mesclar tensores em paralelo')
    p.add_argument('--created-at', help='Instante ISO 8601 gravado no manifesto')

    p = sub.add_parser('sweep', parents=[common], help='Exporta a família w_PT = a, w_SFT = 1 − a')
    _add_merge_inputs(p)
    p.add_argument('--alphas', help='Grade separada por vírgulas (padrão 0.0,...,1.0)')
    p.add_argument('--out', help='Diretório raiz das exportações')
    p.add_argument('--force', action='store_true')
    p.add_argument('--workers', type=int)
    p.add_argument('--created-at')

    p = sub.add_parser('verify', parents=[common], help='Verifica uma exportação contra a mescla pretendida')
    _add_merge_inputs(p)
    p.add_argument('--candidate', help='Checkpoint exportado')
    p.add_argument('--tol-abs', type=float, help='Tolerância absoluta')
    p.add_argument('--tol-rel', type=float, help='Tolerância relativa')

    p = sub.add_parser('attribute', parents=[common], help='Infere os pesos de mistura de um checkpoint')
    p.add_argument('--base')
    p.add_argument('--adapters', nargs='+', help='Arquivos dos adaptadores')
    p.add_argument('--candidate')
    p.add_argument('--strict', action='store_true', help='Falha em sistemas mal condicionados')

    p = sub.add_parser('classify', parents=[common], help='Escolhe a hipótese de mescla mais provável')
    p.add_argument('--base')
    p.add_argument('--adapters', nargs='+')
    p.add_argument('--candidate')
    p.add_argument('--spec', help='Mescla declarada incluída como hipótese')

    p = sub.add_parser('fingerprint', parents=[common], help='Impressão digital de stores de tensores')
    p.add_argument('inputs', nargs='+', metavar='FILE')

    p = sub.add_parser('check-dir', parents=[common], help='Checa risco de sobrescrita no diretório')
    p.add_argument('inputs', nargs=1, metavar='DIR')
    _add_merge_inputs(p)
    p.add_argument('--manifest', help='Manifesto JSON da execução atual')

    p = sub.add_parser('lint', parents=[common], help='Compara templates e procura <think> vazado')
    p.add_argument('--train-template')
    p.add_argument('--eval-template')
    p.add_argument('--generations', help='Gerações (JSONL com "generation" ou texto puro)')

    p = sub.add_parser('render', parents=[common], help='Renderiza uma conversa no template de chat')
    p.add_argument('--template', choices=sorted(TEMPLATE_IDS.values()))
    p.add_argument('--messages', help='JSON com lista de {role, content}')
    p.add_argument('--no-generation-prompt', action='store_true')

    p = sub.add_parser('eval', parents=[common], help='BLEU-4, ROUGE, múltipla escolha e recusas')
    p.add_argument('inputs', nargs=1, metavar='RECORDS')
    p.add_argument('--scored-on', choices=['raw', 'stripped'])
    p.add_argument('--smooth', action='store_true', help='Suavização add-one no BLEU')
    p.add_argument('--refusal', action='store_true', help='Calcula a taxa de recusa')
    p.add_argument('--refusal-markers', help='Marcadores separados por vírgulas')
    p.add_argument('--split', help='Rótulo da partição avaliada')
    p.add_argument('--label', help='Rótulo da execução')
    p.add_argument('--decoding', choices=sorted(DECODING_PRESETS))
    p.add_argument('--think-penalty', action='store_true', help='Pontua com e sem o bloco <think>')
    p.add_argument('--table', action='store_true', help='Tabela em vez de JSON no modo texto')

    p = sub.add_parser('leak-audit', parents=[common], help='Vazamento treino/avaliação por n-gramas')
    p.add_argument('--train')
    p.add_argument('--eval')
    p.add_argument('--train-field', help='Campo de texto no JSONL de treino (padrão "text")')
    p.add_argument('--eval-field', help='Campo de texto no JSONL de avaliação (padrão "prompt")')
    p.add_argument('--n', type=int, help=f"Janela de n-gramas (padrão {LEAKAGE_CONFIG['ngram']})")

    p = sub.add_parser('report', parents=[common], help='Tabela comparativa de relatórios de métricas')
    p.add_argument('inputs', nargs='+', metavar='REPORT')
    p.add_argument('--labels', help='Rótulos separados por vírgulas')

    p = sub.add_parser('train-log', parents=[common], help='Resume logs de loss do trainer')
    p.add_argument('inputs', nargs=1, metavar='FILE')
    p.add_argument('--stage', choices=['PT', 'SFT'], type=str.upper)
    p.add_argument('--plot', help='Arquivo PNG da curva de loss')

    if defaults:
        for subparser in sub.choices.values():
            subparser.set_defaults(**defaults)

    return parser


def _config_defaults(argv: Sequence[str]) -> Dict[str, object]:
    """Valores padrão do arquivo passado em --config (chaves com '_' ou '-')."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('--config')
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    try:
        with open(known.config, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise IoFailure(f"Falha ao ler {known.config}: {e}") from e
    except json.JSONDecodeError as e:
        raise ValueError(f"{known.config} não é JSON válido: {e}") from e
    if not isinstance(data, dict):
        raise ValueError(f"{known.config} deve conter um objeto JSON")
    return {str(k).replace('-', '_'): v for k, v in data.items() if k not in ('command', 'config')}


def parse_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    """
    Resolve a configuração: padrões do config.py, arquivo --config e flags.

    Args:
        argv: Argumentos (padrão sys.argv[1:])

    Returns:
        RunConfig
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser(_config_defaults(argv))
    return RunConfig.from_args(parser.parse_args(argv))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Ponto de entrada da CLI."""
    try:
        config = parse_config(argv)
    except (MesclaError, ValueError) as e:
        Console.error(f"Erro: {e}")
        return EXIT_CODES['structural']
    return run(config)


if __name__ == '__main__':
    sys.exit(main())
