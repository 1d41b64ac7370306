//! Federation snapshots: one `.fdcp` parameter file per client, one for the
//! server's shared tensors, and `manifest.json` for everything else.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::aggregate::{GlobalModel, SharedTensors};
use super::client::ClientState;
use super::federation::{Federation, FederationConfig};
use crate::error::{Error, Result};
use crate::metrics::DriftHistory;
use crate::nn::{load_params, save_params, ModelSpec};
use crate::tensor::{RngState, SeededRng};

const MANIFEST: &str = "manifest.json";
const GLOBAL_FILE: &str = "global.fdcp";

#[derive(Serialize, Deserialize)]
struct ClientEntry {
    id: usize,
    train: Vec<usize>,
    test: Vec<usize>,
    rng: RngState,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    round: usize,
    seed: u64,
    config_digest: String,
    spec: ModelSpec,
    config: FederationConfig,
    drift: DriftHistory,
    clients: Vec<ClientEntry>,
}

fn client_file(id: usize) -> String {
    format!("client_{id}.fdcp")
}

/// Writes the full federation state into `dir`, creating it if needed.
pub fn save_federation(fed: &Federation, config_digest: &str, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    // The server file is a full model whose shared part holds σ̄.
    let mut server = fed.clients()[0].model.clone();
    fed.global().shared.install(&mut server)?;
    save_params(&dir.join(GLOBAL_FILE), &server)?;
    for c in fed.clients() {
        save_params(&dir.join(client_file(c.id)), &c.model)?;
    }
    let manifest = Manifest {
        round: fed.round(),
        seed: fed.config().seed,
        config_digest: config_digest.to_string(),
        spec: fed.spec().clone(),
        config: *fed.config(),
        drift: fed.drift().clone(),
        clients: fed
            .clients()
            .iter()
            .map(|c| ClientEntry {
                id: c.id,
                train: c.train.clone(),
                test: c.test.clone(),
                rng: c.rng.state(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Restores a federation saved by [`save_federation`]; returns it with the
/// stored config digest.
pub fn load_federation(dir: &Path) -> Result<(Federation, String)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: malformed manifest: {e}", path.display())))?;
    let part = manifest.config.mode().shared_part();
    let server = load_params(&dir.join(GLOBAL_FILE))?;
    server.check_against(&manifest.spec)?;
    let global = GlobalModel {
        shared: SharedTensors::extract(&server, part),
        round: manifest.round,
    };
    let mut clients = Vec::with_capacity(manifest.clients.len());
    for entry in manifest.clients {
        let model = load_params(&dir.join(client_file(entry.id)))?;
        model.check_against(&manifest.spec)?;
        clients.push(ClientState {
            id: entry.id,
            model,
            train: entry.train,
            test: entry.test,
            rng: SeededRng::from_state(&entry.rng),
        });
    }
    let fed = Federation::from_parts(manifest.spec, manifest.config, global, clients, manifest.drift);
    Ok((fed, manifest.config_digest))
}
