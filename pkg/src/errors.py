"""
Hierarquia de exceções do MesclaLoRA
"""


class MesclaError(Exception):
    """Erro base de todas as operações da biblioteca."""


# Contêiner de tensores
class StoreError(MesclaError):
    """Falhas de leitura/escrita do contêiner de tensores."""


class MalformedHeader(StoreError):
    """Prefixo de tamanho inválido ou cabeçalho que não é JSON válido."""


class OverlappingOffsets(StoreError):
    """Dois tensores declaram faixas de bytes sobrepostas."""


class TruncatedData(StoreError):
    """A região de dados termina antes do que o cabeçalho declara."""


class UnknownDtype(StoreError):
    """Dtype fora de F32/F16/BF16."""


class InvalidTensor(StoreError):
    """Tensor que viola os invariantes (nome, shape ou tamanho dos dados)."""


class IoFailure(StoreError):
    """Erro de sistema de arquivos."""


# Mescla e auditoria
class MergeError(MesclaError):
    """Falhas da álgebra de adaptadores e da auditoria de mesclas."""


class UnknownModule(MergeError):
    """Módulo alvo ausente no adaptador."""


class ShapeMismatch(MergeError):
    """Dimensões incompatíveis entre A, B e o tensor base."""


class MissingBaseTensor(MergeError):
    """O adaptador aponta para um tensor que não existe no checkpoint base."""


class EmptySpec(MergeError):
    """Especificação de mescla (ou lista de hipóteses) sem entradas."""


class InvalidMergeSpec(MergeError):
    """Pesos não finitos, adaptadores repetidos ou documento JSON inválido."""


class InvalidAdapter(MergeError):
    """Adaptador com rank/alpha inválidos ou pares A/B incompletos."""


class NameSetMismatch(MergeError):
    """Candidato e base não possuem o mesmo conjunto de tensores."""


class SingularSystem(MergeError):
    """Deltas linearmente dependentes além do limiar de condicionamento."""


# Proveniência
class InvalidManifest(MesclaError):
    """Manifesto ilegível ou inconsistente."""


# Avaliação de texto
class EvalError(MesclaError):
    """Falhas das métricas e dos utilitários de template."""


class EmptyCorpus(EvalError):
    """Corpus vazio onde pelo menos um registro é exigido."""


class NoValidLines(EvalError):
    """Nenhuma linha aproveitável no log de treinamento."""


class BadRoleSequence(EvalError):
    """Sequência de papéis fora do padrão System? (User Assistant)*."""


class InvalidRecord(EvalError):
    """Registro de avaliação que viola seus invariantes."""


class ReservedMarker(BadRoleSequence):
    """Conteúdo de mensagem contendo um marcador de turno do template."""
