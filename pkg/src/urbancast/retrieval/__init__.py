"""Task-aware dependency retrieval and its ablation baselines."""

from .clients import (
    CachedLanguageModelClient,
    ChatCompletionsClient,
    EndpointEmbedder,
    HashingTextEmbedder,
    LanguageModelClient,
    MockLanguageModelClient,
    PrototypeQuery,
    PrototypeSource,
    TextEmbedder,
    clients_from_env,
    cosine_similarity,
    embed_text,
    infer_prototype,
)
from .estimator import ContextRetriever
from .lasso import lasso_fit, lasso_objective, soft_threshold
from .mechanisms import (
    ContextSet,
    Mechanism,
    RetrievalConfig,
    make_context,
    retrieve,
    retrieve_latent_similarity,
    retrieve_many,
    retrieve_random,
    retrieve_sparse,
    retrieve_task_aware,
    sparse_selection,
)
from .prompt import PROMPT_TEMPLATE, TaskSpec, build_prompt
