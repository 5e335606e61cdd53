//! Key-value configuration file. Every key is optional; command-line flags
//! override file values, which override the built-in defaults.
//!
//! ```toml
//! theta_p = 3.5
//! lambda_pen = 0.3
//! delta_buf = 0.3
//! room = [4.0, 3.0, 2.8]
//!
//! [endpoint]
//! base_url = "http://localhost:8000/v1"
//! model = "gemini-3-flash"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::http::LiveSettings;
use crate::agents::AgentError;
use crate::pipeline::{DiagnosisMode, PipelineConfig};
use crate::scene::{RoomBoundary, ValidationError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config value: {0}")]
    Value(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSection {
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub embed_model: Option<String>,
    pub embed_dim: Option<usize>,
    pub token_env: Option<String>,
    pub max_in_flight: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub lambda_pen: Option<f64>,
    pub lambda_clr: Option<f64>,
    pub lambda_oob: Option<f64>,
    pub theta_p: Option<f64>,
    pub theta_ret: Option<f64>,
    pub top_k: Option<usize>,
    pub delta_buf: Option<f64>,
    pub delta_int: Option<f64>,
    pub clr_required: Option<f64>,
    pub max_steps: Option<usize>,
    pub grid_step: Option<f64>,
    pub adjacency: Option<f64>,
    pub facing_tolerance: Option<f64>,
    pub render_resolution: Option<u32>,
    pub diagnosis: Option<DiagnosisMode>,
    /// Width, depth, height in meters.
    pub room: Option<[f64; 3]>,
    #[serde(default)]
    pub endpoint: EndpointSection,
}

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Later values win where set.
    pub fn overlay(mut self, top: &Config) -> Config {
        macro_rules! take {
            ($($f:ident),*) => { $( if top.$f.is_some() { self.$f = top.$f.clone(); } )* };
        }
        take!(
            lambda_pen,
            lambda_clr,
            lambda_oob,
            theta_p,
            theta_ret,
            top_k,
            delta_buf,
            delta_int,
            clr_required,
            max_steps,
            grid_step,
            adjacency,
            facing_tolerance,
            render_resolution,
            diagnosis,
            room
        );
        let (e, t) = (&mut self.endpoint, &top.endpoint);
        macro_rules! take_ep {
            ($($f:ident),*) => { $( if t.$f.is_some() { e.$f = t.$f.clone(); } )* };
        }
        take_ep!(
            base_url,
            model,
            embed_model,
            embed_dim,
            token_env,
            max_in_flight
        );
        self
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, ConfigError> {
        let mut c = PipelineConfig::default();
        let w = &mut c.refine.weights;
        if let Some(v) = self.lambda_pen {
            w.lambda_pen = v;
        }
        if let Some(v) = self.lambda_clr {
            w.lambda_clr = v;
        }
        if let Some(v) = self.lambda_oob {
            w.lambda_oob = v;
        }
        if let Some(v) = self.theta_p {
            w.theta_p = v;
        }
        w.validate()
            .map_err(|e| ConfigError::Value(e.to_string()))?;
        if let Some(v) = self.theta_ret {
            c.theta_ret = v;
        }
        if let Some(v) = self.top_k {
            if v == 0 {
                return Err(ConfigError::Value("top_k must be at least 1".into()));
            }
            c.top_k = v;
        }
        if let Some(v) = self.delta_buf {
            c.grounding.delta_buf = v;
        }
        if let Some(v) = self.delta_int {
            c.grounding.delta_int = v;
            c.refine.delta_int = v;
        }
        let g = &c.grounding;
        if !(g.delta_buf >= 0.0 && g.delta_buf < g.delta_int) {
            return Err(ConfigError::Value(format!(
                "delta_buf ({}) must be in [0, delta_int = {})",
                g.delta_buf, g.delta_int
            )));
        }
        if let Some(v) = self.clr_required {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::Value(format!("clr_required {v}")));
            }
            c.refine.clr_required = v;
        }
        if let Some(v) = self.max_steps {
            if v == 0 {
                return Err(ConfigError::Value("max_steps must be at least 1".into()));
            }
            c.refine.max_steps = v;
        }
        if let Some(v) = self.grid_step {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Value(format!("grid_step {v}")));
            }
            c.grounding.search.step = v;
        }
        if let Some(v) = self.adjacency {
            c.grounding.criteria.adjacency = v;
        }
        if let Some(v) = self.facing_tolerance {
            c.grounding.criteria.facing_tolerance = v;
        }
        c.grounding
            .criteria
            .validate()
            .map_err(|e| ConfigError::Value(e.to_string()))?;
        if let Some(v) = self.render_resolution {
            c.refine.render_resolution = Some(v);
        }
        if let Some(v) = self.diagnosis {
            c.diagnosis = v;
        }
        if let Some([w, d, h]) = self.room {
            c.room = RoomBoundary::new(w, d, h)?;
        }
        Ok(c)
    }

    /// Endpoint settings: file values, then the environment.
    pub fn live_settings(&self) -> Result<LiveSettings, AgentError> {
        let e = &self.endpoint;
        let mut s = LiveSettings::from_env_with(e.base_url.clone())?;
        if let Some(v) = &e.model {
            s.model = v.clone();
        }
        if let Some(v) = &e.embed_model {
            s.embed_model = v.clone();
        }
        if let Some(v) = e.embed_dim {
            s.embed_dim = v;
        }
        if let Some(v) = &e.token_env {
            s.token_env = v.clone();
        }
        Ok(s)
    }

    pub fn max_in_flight(&self) -> usize {
        self.endpoint.max_in_flight.unwrap_or(DEFAULT_MAX_IN_FLIGHT)
    }
}
