//! Flat `key=value` config files for arena parameters.
//!
//! One pair per line, `#` starts a comment, blank lines ignored. Unknown keys
//! are an error so typos surface immediately.

use super::{ArenaConfig, Scenario, WorldError};
use std::path::Path;

pub fn parse_config_file(path: &Path) -> Result<ArenaConfig, WorldError> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ArenaConfig, WorldError> {
    // scenario must be known before defaults can be filled in
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(WorldError::ConfigParse {
            line: i + 1,
            msg: format!("expected key=value, got `{line}`"),
        })?;
        pairs.push((i + 1, key.trim().to_string(), value.trim().to_string()));
    }

    let scenario = pairs
        .iter()
        .find(|(_, k, _)| k == "scenario")
        .map(|(line, _, v)| {
            Scenario::from_name(v).ok_or(WorldError::ConfigParse {
                line: *line,
                msg: format!("unknown scenario `{v}`"),
            })
        })
        .transpose()?
        .unwrap_or(Scenario::DefendLine);

    let mut cfg = ArenaConfig::defaults(scenario);
    for (line, key, value) in &pairs {
        let line = *line;
        let parse_err = |msg: String| WorldError::ConfigParse { line, msg };
        match key.as_str() {
            "scenario" => {}
            "width" => cfg.width = parse_num(value).map_err(parse_err)?,
            "height" => cfg.height = parse_num(value).map_err(parse_err)?,
            "max_ticks" => cfg.max_ticks = parse_num(value).map_err(parse_err)?,
            "nuisance_count" => cfg.nuisance_count = parse_num(value).map_err(parse_err)?,
            "allow_nuisance" => {
                cfg.allow_nuisance = parse_bool(value).map_err(parse_err)?;
            }
            "enemy_spawn_period" => cfg.enemy_spawn_period = parse_num(value).map_err(parse_err)?,
            "enemy_fire_period" => cfg.enemy_fire_period = parse_num(value).map_err(parse_err)?,
            "item_spawn_period" => cfg.item_spawn_period = parse_num(value).map_err(parse_err)?,
            "start_ammo" => cfg.start_ammo = parse_num(value).map_err(parse_err)?,
            "shot_range_rows" => cfg.shot_range_rows = parse_num(value).map_err(parse_err)?,
            "rng_seed" => cfg.rng_seed = parse_num(value).map_err(parse_err)?,
            other => {
                return Err(WorldError::ConfigParse {
                    line,
                    msg: format!("unknown key `{other}`"),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("invalid number `{v}`"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("invalid bool `{v}`")),
    }
}
