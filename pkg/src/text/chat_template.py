"""
Módulo de templates de chat (com e sem "thinking") e blocos <think>
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, NamedTuple, Sequence, Union

from config import CHAT_MARKERS, TEMPLATE_IDS
from src.errors import BadRoleSequence, ReservedMarker


class Role(str, Enum):
    SYSTEM = 'system'
    USER = 'user'
    ASSISTANT = 'assistant'


class TemplateId(str, Enum):
    THINK = TEMPLATE_IDS['think']
    NO_THINK = TEMPLATE_IDS['nothink']


@dataclass(frozen=True)
class Message:
    role: Role
    content: str

    @classmethod
    def from_dict(cls, data: Dict[str, str]) -> 'Message':
        try:
            role = Role(str(data['role']).lower())
        except (KeyError, ValueError) as e:
            raise BadRoleSequence(f"Papel inválido: {data.get('role')!r}") from e
        return cls(role=role, content=str(data.get('content', '')))


class ThinkSplit(NamedTuple):
    thought: str
    answer: str
    wellformed: bool


def parse_template_id(text: Union[str, TemplateId]) -> TemplateId:
    """
    Converte o identificador textual ("qwen3" / "qwen3_nothink").

    Args:
        text: Identificador

    Returns:
        TemplateId correspondente

    Raises:
        ValueError: identificador desconhecido
    """
    if isinstance(text, TemplateId):
        return text
    try:
        return TemplateId(str(text).strip())
    except ValueError:
        valid = ', '.join(t.value for t in TemplateId)
        raise ValueError(f"Template desconhecido: {text!r} (use {valid})") from None


def _check_roles(messages: Sequence[Message]) -> None:
    if not messages:
        raise BadRoleSequence("Conversa vazia")
    turns = list(messages)
    if turns[0].role == Role.SYSTEM:
        turns = turns[1:]
    for i, message in enumerate(turns):
        expected = Role.USER if i % 2 == 0 else Role.ASSISTANT
        if message.role != expected:
            raise BadRoleSequence(
                f"Turno {i}: esperado '{expected.value}', recebido '{message.role.value}'"
            )


def _check_markers(messages: Sequence[Message]) -> None:
    reserved = (CHAT_MARKERS['start'], CHAT_MARKERS['end'])
    for i, message in enumerate(messages):
        for marker in reserved:
            if marker in message.content:
                raise ReservedMarker(f"Mensagem {i} contém o marcador reservado {marker!r}")


def render(messages: Sequence[Message], template: Union[str, TemplateId],
           add_generation_prompt: bool = True) -> str:
    """
    Renderiza a conversa no formato <|im_start|>papel ... <|im_end|>.

    O template sem thinking acrescenta o bloco vazio "<think>\\n\\n</think>\\n\\n"
    após o prólogo do assistente, pré-preenchendo um pensamento vazio.

    Args:
        messages: Mensagens (System opcional, depois User/Assistant alternados)
        template: TemplateId ou identificador textual
        add_generation_prompt: Acrescenta o prólogo do assistente

    Returns:
        Prompt renderizado

    Raises:
        BadRoleSequence: sequência de papéis inválida
        ReservedMarker: conteúdo com marcador de início/fim de turno
    """
    template = parse_template_id(template)
    _check_roles(messages)
    _check_markers(messages)

    start, end = CHAT_MARKERS['start'], CHAT_MARKERS['end']
    parts = [f"{start}{m.role.value}\n{m.content}{end}\n" for m in messages]

    if add_generation_prompt:
        parts.append(f"{start}{Role.ASSISTANT.value}\n")
        if template == TemplateId.NO_THINK:
            parts.append(CHAT_MARKERS['empty_think'])

    return ''.join(parts)


def strip_think(text: str) -> ThinkSplit:
    """
    Separa o primeiro bloco <think> do restante da geração.

    - abre e fecha: thought = interior, answer = resto sem espaços à esquerda
    - sem abertura: thought vazio, answer = texto original
    - abre sem fechar: thought = tudo após a abertura, answer vazio, malformado

    Blocos <think> posteriores permanecem na resposta.

    Args:
        text: Geração do modelo

    Returns:
        ThinkSplit(thought, answer, wellformed)
    """
    open_tag, close_tag = CHAT_MARKERS['think_open'], CHAT_MARKERS['think_close']
    stripped = text.lstrip()
    if not stripped.startswith(open_tag):
        return ThinkSplit('', text, True)

    rest = stripped[len(open_tag):]
    idx = rest.find(close_tag)
    if idx < 0:
        return ThinkSplit(rest, '', False)

    return ThinkSplit(rest[:idx], rest[idx + len(close_tag):].lstrip(), True)


def has_think_marker(text: str) -> bool:
    """Indica se a geração contém o marcador de abertura <think> em qualquer posição."""
    return CHAT_MARKERS['think_open'] in text


def think_stats(generations: Iterable[str]) -> Dict[str, float]:
    """
    Resume a presença de blocos de pensamento nas gerações.

    Args:
        generations: Textos gerados

    Returns:
        Dicionário com n, with_think, malformed, think_rate e mean_thought_tokens
    """
    n = with_think = malformed = 0
    thought_tokens: List[int] = []
    for text in generations:
        n += 1
        split = strip_think(text)
        if has_think_marker(text):
            with_think += 1
        if not split.wellformed:
            malformed += 1
        if split.thought.strip():
            thought_tokens.append(len(split.thought.split()))

    return {
        'n': n,
        'with_think': with_think,
        'malformed': malformed,
        'think_rate': with_think / n if n else 0.0,
        'mean_thought_tokens': sum(thought_tokens) / len(thought_tokens) if thought_tokens else 0.0,
    }
