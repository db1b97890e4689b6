//! Headless engine for registering a 3D head model onto a tracked face,
//! plus the tooling to replay, score and serve tracking sessions.

pub mod evaluation;
pub mod geometry;
pub mod glb;
pub mod mesh;
pub mod models;
pub mod registration;
pub mod segmentation;
pub mod session;
pub mod replay;
pub mod service;
pub mod cli;
