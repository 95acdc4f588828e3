use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Args;
use pinshape_core::llm::{HttpTransport, Transport, DEFAULT_API_KEY_ENV, DEFAULT_BASE_URL};
use pinshape_core::{Engine, EngineConfig, Gateway, Mode, ModelConfig};

/// Model and fixture settings shared by every command.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// live, record or replay
    #[arg(long, env = "PINSHAPE_MODE", default_value = "live")]
    pub mode: Mode,
    /// Fixture directory for record and replay modes.
    #[arg(long, env = "PINSHAPE_FIXTURES")]
    pub fixtures: Option<PathBuf>,
    #[arg(long, env = "PINSHAPE_HELPER_MODEL", default_value = pinshape_core::llm::DEFAULT_HELPER_MODEL)]
    pub helper_model: String,
    #[arg(long, env = "PINSHAPE_GENERATOR_MODEL", default_value = pinshape_core::llm::DEFAULT_GENERATOR_MODEL)]
    pub generator_model: String,
    /// Embedding model; the default needs no provider.
    #[arg(long, env = "PINSHAPE_EMBEDDING_MODEL", default_value = pinshape_core::llm::FALLBACK_EMBEDDING_MODEL)]
    pub embedding_model: String,
    #[arg(long, env = "PINSHAPE_BASE_URL", default_value = DEFAULT_BASE_URL)]
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    #[arg(long, default_value = DEFAULT_API_KEY_ENV)]
    pub api_key_env: String,
}

impl ModelArgs {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            helper_model: self.helper_model.clone(),
            generator_model: self.generator_model.clone(),
            embedding_model: self.embedding_model.clone(),
            mode: self.mode,
            fixture_dir: self.fixtures.clone(),
        }
    }

    pub fn gateway(&self) -> anyhow::Result<Gateway> {
        let transport: Option<Arc<dyn Transport>> = match self.mode {
            Mode::Replay => None,
            Mode::Live | Mode::Record => Some(Arc::new(
                HttpTransport::from_env(&self.base_url, &self.api_key_env).map_err(|e| anyhow::anyhow!(e.message))?,
            )),
        };
        Gateway::new(self.mode, transport, self.fixtures.clone()).context("building the model gateway")
    }

    pub fn engine(&self) -> anyhow::Result<Engine> {
        let gateway = self.gateway()?;
        let config = EngineConfig::from_models(&self.model_config());
        Engine::seeded(gateway, config).context("loading the example collections")
    }
}
