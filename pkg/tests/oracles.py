"""Independent straight-line re-implementations used as test oracles.

Everything here is deliberately written with plain Python loops and
``math`` so it shares no code path with the vectorized implementation it
checks.
"""

import math


def naive_mlp_row(row, w1, b1, w2, b2):
    """affine -> ReLU -> affine for one token, all plain loops."""
    hidden = []
    for j in range(len(b1)):
        acc = b1[j]
        for i in range(len(row)):
            acc += row[i] * w1[i][j]
        hidden.append(max(acc, 0.0))
    out = []
    for j in range(len(b2)):
        acc = b2[j]
        for i in range(len(hidden)):
            acc += hidden[i] * w2[i][j]
        out.append(acc)
    return out


def naive_attention_block(tokens, heads):
    """One multi-head attention block.

    ``tokens`` is a list of rows; ``heads`` is a list of dicts with q/k/v
    w1, b1, w2, b2 entries (plain nested lists).
    """
    n = len(tokens)
    out_rows = [[] for _ in range(n)]
    for head in heads:
        d = len(head["q_b2"])
        queries = [naive_mlp_row(t, head["q_w1"], head["q_b1"], head["q_w2"], head["q_b2"]) for t in tokens]
        keys = [naive_mlp_row(t, head["k_w1"], head["k_b1"], head["k_w2"], head["k_b2"]) for t in tokens]
        values = [naive_mlp_row(t, head["v_w1"], head["v_b1"], head["v_w2"], head["v_b2"]) for t in tokens]
        for i in range(n):
            logits = []
            for j in range(n):
                dot = sum(queries[i][a] * keys[j][a] for a in range(d))
                logits.append(dot / math.sqrt(d))
            peak = max(logits)
            exp_row = [math.exp(v - peak) for v in logits]
            total = sum(exp_row)
            weights = [v / total for v in exp_row]
            head_out = [sum(weights[j] * values[j][a] for j in range(n)) for a in range(d)]
            out_rows[i].extend(head_out)
    return out_rows


def naive_embed(x, embed_w, embed_b):
    return [[x[i] * embed_w[i][j] + embed_b[i][j] for j in range(len(embed_b[i]))] for i in range(len(x))]


def naive_score_head(tokens, w1, b1, w2, b2_scalar):
    flat = [v for row in tokens for v in row]
    hidden = []
    for j in range(len(b1)):
        acc = b1[j]
        for i in range(len(flat)):
            acc += flat[i] * w1[i][j]
        hidden.append(max(acc, 0.0))
    acc = b2_scalar
    for i in range(len(hidden)):
        acc += hidden[i] * w2[i][0]
    return max(acc, 0.0)


def head_params_to_lists(head):
    return {
        name: getattr(head, name).tolist()
        for name in ("q_w1", "q_b1", "q_w2", "q_b2", "k_w1", "k_b1", "k_w2", "k_b2", "v_w1", "v_b1", "v_w2", "v_b2")
    }


def naive_forward(x, params):
    """Full pipeline oracle on one sample: embed, every block, score head."""
    tokens = naive_embed(list(x), params.embed_w.tolist(), params.embed_b.tolist())
    for heads in params.blocks:
        tokens = naive_attention_block(tokens, [head_params_to_lists(h) for h in heads])
    return naive_score_head(
        tokens,
        params.head_w1.tolist(),
        params.head_b1.tolist(),
        params.head_w2.tolist(),
        float(params.head_b2[0]),
    )
