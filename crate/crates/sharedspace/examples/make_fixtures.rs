//! Regenerates the files under `fixtures/`.

use std::fs::File;
use std::path::Path;

use sharedspace::calibration::Observations;
use sharedspace::dataset::{write_annotations, write_trajectories};
use sharedspace::fixtures::{crossing_scenario, synthetic_dataset, table_shaped_observations};
use sharedspace::formats::{to_toml, SceneFile};
use sharedspace_core::engine::SimulationConfig;
use sharedspace_core::{AgentKind, ParameterSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir)?;

    let data = synthetic_dataset(9, 7, &SimulationConfig::default())?;
    std::fs::write(dir.join("scene.toml"), to_toml(&SceneFile::from_scene(&data.scene))?)?;
    std::fs::write(dir.join("crossing.toml"), to_toml(&crossing_scenario())?)?;
    std::fs::write(dir.join("params.toml"), to_toml(&ParameterSet::default())?)?;
    write_trajectories(File::create(dir.join("trajectories.csv"))?, &data.trajectories, 1.0)?;
    write_annotations(File::create(dir.join("annotations.csv"))?, &data.annotations)?;

    let obs: [(&str, Observations); 2] = [
        ("observations_car.csv", table_shaped_observations(AgentKind::Car, 2000, 11)),
        ("observations_ped.csv", table_shaped_observations(AgentKind::Pedestrian, 2000, 11)),
    ];
    for (name, o) in obs {
        o.write(&dir.join(name))?;
    }
    println!("wrote fixtures to {}", dir.display());
    Ok(())
}
