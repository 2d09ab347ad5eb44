from __future__ import annotations

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # =================================================
    # 1. Logging
    # =================================================
    logging_level: str = "INFO"
    logging_file_dir: str = "logs"
    logging_to_file: bool = False

    # =================================================
    # 2. Reproducibility
    # =================================================
    # APO_SEED overrides the seed of every experiment config
    apo_seed: int | None = None

    # =================================================
    # 3. Meta-optimization defaults
    # =================================================
    meta_interval: int = 10
    lr_meta_lr: float = 0.1
    precond_meta_lr: float = 1e-4
    lambda_fsd: float = 0.1
    lambda_wsd: float = 0.1
    precond_scale: float = 0.9
    precond_warmup_steps: int = 300
    # warm-up runs at the base LR; this momentum applies when the base optimizer has none
    warmup_momentum: float = 0.9

    # =================================================
    # 4. Guards
    # =================================================
    divergence_threshold: float = 1e12
    oracle_max_params: int = 2000
    kron_oracle_max: int = 256
    spd_max_dim: int = 512
    eig_max_dim: int = 256

    # =================================================
    # 5. Exact proximal point solver
    # =================================================
    ppm_tol: float = 1e-10
    ppm_max_iters: int = 100000

    # =================================================
    # 6. Metrics & grid
    # =================================================
    record_wallclock: bool = False
    eval_interval: int = 10
    grid_parallel: int = 1

    # =================================================
    # Pydantic config
    # =================================================
    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore", case_sensitive=False)


# Export
config = Settings()


def reload_config() -> Settings:
    """Re-read environment and .env into the shared `config` object in place."""
    new_config = Settings()
    # Update existing object's attributes (preserves references in other modules)
    for key, value in new_config.model_dump().items():
        setattr(config, key, value)
    return config
