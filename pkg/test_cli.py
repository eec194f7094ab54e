#!/usr/bin/env python3
"""
Testes de ponta a ponta da CLI (main com argv explícito)
"""

import json
import os
import sys

import pytest

# Adicionar diretório raiz ao path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import MANIFEST_NAME, MERGED_NAME
from src.cli import main, parse_config
from src.merge import MergeSpec, apply_merge, save_adapter
from src.store import write_store


@pytest.fixture
def workspace(tmp_path, synthetic, monkeypatch):
    """Base, adaptadores e especificação gravados em disco."""
    monkeypatch.delenv('SOURCE_DATE_EPOCH', raising=False)
    monkeypatch.delenv('MESCLA_TOLERANCE_PROFILE', raising=False)
    write_store(synthetic.base, tmp_path / 'base.safetensors')
    save_adapter(synthetic.pt, tmp_path / 'pt.safetensors')
    save_adapter(synthetic.sft, tmp_path / 'sft.safetensors')
    spec = {
        'entries': [{'adapter': 'pt.safetensors', 'weight': 0.3},
                    {'adapter': 'sft.safetensors', 'weight': 0.7}],
        'label': 'pt0.3/sft0.7',
    }
    (tmp_path / 'spec.json').write_text(json.dumps(spec), encoding='utf-8')
    return tmp_path


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


def _merge(ws, capsys, out='export', *extra):
    return _run(capsys, 'merge', '--base', ws / 'base.safetensors', '--pt', ws / 'pt.safetensors',
                '--sft', ws / 'sft.safetensors', '--out', ws / out, '--json', *extra)


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


# ============================================================================
# merge / verify
# ============================================================================

def test_merge_then_verify(workspace, capsys):
    code, out = _merge(workspace, capsys)
    assert code == 0
    result = json.loads(out)
    assert result['written'] is True
    assert result['weights'] == {'pt': 0.3, 'sft': 0.7}
    assert (workspace / 'export' / MERGED_NAME).exists()
    assert (workspace / 'export' / MANIFEST_NAME).exists()

    code, out = _run(capsys, 'verify', '--base', workspace / 'base.safetensors',
                     '--spec', workspace / 'spec.json',
                     '--candidate', workspace / 'export' / MERGED_NAME, '--json')
    assert code == 0
    assert json.loads(out)['verdict'] == 'Pass'


def test_verify_wrong_export_fails(workspace, capsys, synthetic):
    sft_only = apply_merge(synthetic.base, MergeSpec(entries=[(synthetic.sft, 1.0)]))
    write_store(sft_only, workspace / 'sft_only.safetensors')

    code, out = _run(capsys, 'verify', '--base', workspace / 'base.safetensors',
                     '--spec', workspace / 'spec.json',
                     '--candidate', workspace / 'sft_only.safetensors', '--json')
    assert code == 2
    assert json.loads(out)['verdict'] == 'Fail'


def test_rerun_is_byte_identical(workspace, capsys):
    assert _merge(workspace, capsys)[0] == 0
    first = _snapshot(workspace / 'export')
    assert _merge(workspace, capsys)[0] == 0
    assert _snapshot(workspace / 'export') == first


def test_source_date_epoch(workspace, capsys, monkeypatch):
    monkeypatch.setenv('SOURCE_DATE_EPOCH', '1700000000')
    assert _merge(workspace, capsys)[0] == 0
    manifest = json.loads((workspace / 'export' / MANIFEST_NAME).read_text(encoding='utf-8'))
    assert manifest['created_at'] == '2023-11-14T22:13:20Z'


def test_fresh_directories_identical_with_source_date_epoch(workspace, capsys, monkeypatch):
    monkeypatch.setenv('SOURCE_DATE_EPOCH', '1700000000')
    assert _merge(workspace, capsys, 'primeira')[0] == 0
    assert _merge(workspace, capsys, 'segunda')[0] == 0
    assert _snapshot(workspace / 'primeira') == _snapshot(workspace / 'segunda')


def test_created_at_flag(workspace, capsys):
    assert _merge(workspace, capsys, 'export', '--created-at', '2025-01-01 12:30:00')[0] == 0
    manifest = json.loads((workspace / 'export' / MANIFEST_NAME).read_text(encoding='utf-8'))
    assert manifest['created_at'] == '2025-01-01T12:30:00Z'

    assert _merge(workspace, capsys, 'outro', '--created-at', 'ontem')[0] == 3
    assert not (workspace / 'outro').exists()


def test_foreign_export_is_refused(workspace, capsys):
    assert _merge(workspace, capsys)[0] == 0
    before = _snapshot(workspace / 'export')

    code, out = _merge(workspace, capsys, 'export', '--w-pt', '0', '--w-sft', '1')
    assert code == 2
    assert json.loads(out)['written'] is False
    assert _snapshot(workspace / 'export') == before

    code, _ = _merge(workspace, capsys, 'export', '--w-pt', '0', '--w-sft', '1', '--force')
    assert code == 0
    manifest = json.loads((workspace / 'export' / MANIFEST_NAME).read_text(encoding='utf-8'))
    assert manifest['merge_weights'] == {'pt': 0.0, 'sft': 1.0}


def test_check_dir(workspace, capsys):
    assert _merge(workspace, capsys)[0] == 0
    args = ['check-dir', workspace / 'export', '--base', workspace / 'base.safetensors',
            '--pt', workspace / 'pt.safetensors', '--sft', workspace / 'sft.safetensors', '--json']

    code, out = _run(capsys, *args)
    assert code == 0
    assert [f['kind'] for f in json.loads(out)] == ['Clean']

    code, out = _run(capsys, *args, '--w-pt', '0.5', '--w-sft', '0.5')
    assert code == 2
    assert [f['kind'] for f in json.loads(out)] == ['OverwriteRisk']


def test_sweep(workspace, capsys):
    code, out = _run(capsys, 'sweep', '--base', workspace / 'base.safetensors',
                     '--pt', workspace / 'pt.safetensors', '--sft', workspace / 'sft.safetensors',
                     '--out', workspace / 'sweep', '--alphas', '0,0.5,1', '--json')
    assert code == 0
    results = json.loads(out)
    assert [r['alpha'] for r in results] == [0.0, 0.5, 1.0]
    assert sorted(p.name for p in (workspace / 'sweep').iterdir()) == [
        'pt0.5_sft0.5', 'pt0_sft1', 'pt1_sft0']


# ============================================================================
# attribute / classify / fingerprint
# ============================================================================

def test_attribute(workspace, capsys):
    _merge(workspace, capsys)
    code, out = _run(capsys, 'attribute', '--base', workspace / 'base.safetensors',
                     '--adapters', workspace / 'pt.safetensors', workspace / 'sft.safetensors',
                     '--candidate', workspace / 'export' / MERGED_NAME, '--json')
    assert code == 0
    weights = json.loads(out)['inferred_weights']
    assert weights == pytest.approx({'pt': 0.3, 'sft': 0.7}, abs=1e-4)


def test_classify_misattributed_export(workspace, capsys, synthetic):
    sft_only = apply_merge(synthetic.base, MergeSpec(entries=[(synthetic.sft, 1.0)]))
    write_store(sft_only, workspace / 'sft_only.safetensors')

    code, out = _run(capsys, 'classify', '--base', workspace / 'base.safetensors',
                     '--adapters', workspace / 'pt.safetensors', workspace / 'sft.safetensors',
                     '--candidate', workspace / 'sft_only.safetensors',
                     '--spec', workspace / 'spec.json', '--json')
    assert code == 0
    report = json.loads(out)
    assert report['best_hypothesis'] == 'sft-only'
    assert 'pt0.3/sft0.7' in report['hypothesis_residuals']


def test_fingerprint(workspace, capsys):
    code, out = _run(capsys, 'fingerprint', workspace / 'base.safetensors',
                     workspace / 'pt.safetensors', '--json')
    assert code == 0
    result = json.loads(out)
    assert len(result) == 2
    assert all(len(fp['digest']) == 64 for fp in result.values())


# ============================================================================
# Texto: lint / render / eval / report / leak-audit
# ============================================================================

def test_lint_detects_leakage(tmp_path, capsys):
    gens = tmp_path / 'gens.jsonl'
    gens.write_text('{"generation": "<think>hmm</think>B"}\n{"generation": "A"}\n', encoding='utf-8')

    code, out = _run(capsys, 'lint', '--train-template', 'qwen3_nothink',
                     '--eval-template', 'qwen3_nothink', '--generations', gens, '--json')
    assert code == 2
    assert json.loads(out)[0]['kind'] == 'ThinkLeakage'

    code, _ = _run(capsys, 'lint', '--train-template', 'qwen3', '--eval-template', 'qwen3',
                   '--generations', gens)
    assert code == 0


def test_render(tmp_path, capsys):
    messages = tmp_path / 'msgs.json'
    messages.write_text(json.dumps([{'role': 'user', 'content': 'Hi'}]), encoding='utf-8')
    code, out = _run(capsys, 'render', '--template', 'qwen3', '--messages', messages)
    assert code == 0
    assert out == '<|im_start|>user\nHi<|im_end|>\n<|im_start|>assistant\n\n'


def _write_records(path, rows):
    path.write_text('\n'.join(json.dumps(r) for r in rows) + '\n', encoding='utf-8')


def test_eval_and_report(tmp_path, capsys):
    _write_records(tmp_path / 'sft.jsonl', [
        {'id': '1', 'prompt': 'q', 'generation': '<think>x</think>the cat sat on the mat',
         'reference': 'the cat sat on the mat'},
    ])
    _write_records(tmp_path / 'merged.jsonl', [
        {'id': '1', 'prompt': 'q', 'generation': 'the cat sat on the mat',
         'reference': 'the cat sat on a mat'},
    ])

    for name in ('sft', 'merged'):
        code, out = _run(capsys, 'eval', tmp_path / f'{name}.jsonl', '--label', name, '--json')
        assert code == 0
        (tmp_path / f'{name}.report.json').write_text(out, encoding='utf-8')

    assert json.loads((tmp_path / 'sft.report.json').read_text())['bleu4'] == 100.0

    code, out = _run(capsys, 'report', tmp_path / 'sft.report.json', tmp_path / 'merged.report.json')
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split() == ['Run', 'BLEU-4', 'R-1', 'R-2', 'R-L']
    assert [line.split()[0] for line in lines[1:]] == ['sft', 'merged']


def test_eval_think_penalty(tmp_path, capsys):
    _write_records(tmp_path / 'r.jsonl', [
        {'id': '1', 'prompt': 'q', 'generation': '<think>long reasoning here</think>a b c d e',
         'reference': 'a b c d e'},
    ])
    code, out = _run(capsys, 'eval', tmp_path / 'r.jsonl', '--think-penalty', '--json')
    assert code == 0
    result = json.loads(out)
    assert result['stripped']['bleu4'] == 100.0
    assert result['delta_bleu4'] > 0


def test_leak_audit(tmp_path, capsys):
    span = ' '.join(f'tok{i}' for i in range(13))
    (tmp_path / 'train.txt').write_text(f'{span} tail\nother training text\n', encoding='utf-8')
    _write_records(tmp_path / 'eval.jsonl', [
        {'id': 'q1', 'prompt': f'prefix {span}'},
        {'id': 'q2', 'prompt': 'fresh question'},
    ])

    code, out = _run(capsys, 'leak-audit', '--train', tmp_path / 'train.txt',
                     '--eval', tmp_path / 'eval.jsonl', '--json', '--quiet')
    assert code == 2
    report = json.loads(out)
    assert report['contaminated_eval'] == 1
    assert report['examples'] == [['q1', span]]

    _write_records(tmp_path / 'clean.jsonl', [{'id': 'q2', 'prompt': 'fresh question'}])
    code, _ = _run(capsys, 'leak-audit', '--train', tmp_path / 'train.txt',
                   '--eval', tmp_path / 'clean.jsonl', '--quiet')
    assert code == 0


def test_train_log(tmp_path, capsys):
    log = tmp_path / 'pt.jsonl'
    log.write_text('{"epoch": 1.0, "loss": 2.5}\n{"epoch": 4.0, "loss": 2.12}\n', encoding='utf-8')
    code, out = _run(capsys, 'train-log', log, '--stage', 'pt', '--plot', tmp_path / 'pt.png')
    assert code == 0
    assert out.strip() == 'Final PT Loss: 2.12 (Epoch 4.0)'
    assert (tmp_path / 'pt.png').exists()


# ============================================================================
# Configuração e erros
# ============================================================================

def test_config_file_defaults(workspace, capsys):
    (workspace / 'run.json').write_text(json.dumps({'w-pt': 0.0, 'w_sft': 1.0, 'decoding': 'A'}),
                                        encoding='utf-8')
    config = parse_config(['merge', '--config', str(workspace / 'run.json'), '--w-sft', '0.9'])
    assert config.opt('w_pt') == 0.0
    assert config.opt('w_sft') == 0.9
    assert config.opt('decoding') == 'A'

    code, _ = _merge(workspace, capsys, 'export', '--config', workspace / 'run.json')
    assert code == 0
    manifest = json.loads((workspace / 'export' / MANIFEST_NAME).read_text(encoding='utf-8'))
    assert manifest['merge_weights'] == {'pt': 0.0, 'sft': 1.0}
    assert manifest['decoding'] == {'temperature': 0.0, 'top_p': 1.0}


def test_missing_input_is_structural(workspace, capsys):
    code, _ = _run(capsys, 'verify', '--spec', workspace / 'spec.json',
                   '--candidate', workspace / 'base.safetensors')
    assert code == 3

    code, _ = _run(capsys, 'fingerprint', workspace / 'nao_existe.safetensors')
    assert code == 3


def test_corrupt_store_is_structural(workspace, capsys):
    (workspace / 'ruim.safetensors').write_bytes(b'\x00\x01')
    code, _ = _run(capsys, 'fingerprint', workspace / 'ruim.safetensors')
    assert code == 3


def test_bad_arguments_exit_structural(capsys):
    with pytest.raises(SystemExit) as exc:
        main(['merge', '--opcao-inexistente'])
    assert exc.value.code == 3

    with pytest.raises(SystemExit) as exc:
        main(['subcomando'])
    assert exc.value.code == 3


if __name__ == '__main__':
    sys.exit(pytest.main([__file__, '-v']))
