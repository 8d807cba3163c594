"""
Тексты, которые CLI показывает пользователю
"""

USER_MESSAGES = {
    # Ошибки и коды выхода
    "usage_error": "error: {error}",
    "io_error": "error: cannot access {path}: {error}",
    "divergence": "training diverged: {error}",
    "unknown_command": "unknown command '{command}', expected one of: {choices}",

    # Результаты команд
    "train_done": "checkpoint written to {checkpoint}, loss log {loss_log} ({rows} rows)",
    "eval_done": "report written to {report}",
    "histogram_done": "histogram written to {histogram} ({rows} rows)",
    "compare_done": "comparison table written to {table}",
    "sweep_done": "sweep table written to {table}",

    # Текстовый блок отчета
    "report_block": """
Open-set evaluation
  AUROC                {auroc:.4f}
  F-score (macro)      {f_score_macro:.4f}
  F-score (best s)     {f_score_best_slack:.4f}
  overall accuracy     {overall_accuracy:.4f}
  openness             {openness:.4f}
  threshold tau        {tau:.4f} nats (s = {slack:+.4f})
  known / unknown      {n_known} / {n_unknown}
  per-class recall     {recall}
""".strip(),

    # Сводка гистограммы
    "histogram_summary": (
        "overlap={overlap:.6f} tau={tau:.6f} known_p05={known_p05:.6f} "
        "unknown_median={unknown_median:.6f}"
    ),
}
