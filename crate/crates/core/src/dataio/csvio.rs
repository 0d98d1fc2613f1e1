use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, SpectraRecord};
use crate::error::{Error, Result};

const TRAIT_PREFIX: &str = "trait:";

/// Reads a spectra table from disk.
///
/// Header: `genotype,env,rep,w_0,...,w_{D-1}` followed by zero or more
/// `trait:<name>` columns. Empty trait cells mean "not measured". Row numbers
/// in errors are 1-based file lines, the header being line 1.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();

    for (i, want) in ["genotype", "env", "rep"].iter().enumerate() {
        if names.get(i).map(|s| s.trim()) != Some(*want) {
            return Err(Error::Parse {
                row: 1,
                msg: format!("missing column `{want}` at position {i}"),
            });
        }
    }
    let mut wavelengths = 0;
    while let Some(name) = names.get(3 + wavelengths) {
        if name.trim() != format!("w_{wavelengths}") {
            break;
        }
        wavelengths += 1;
    }
    if wavelengths == 0 {
        return Err(Error::Parse {
            row: 1,
            msg: "no wavelength columns (expected w_0, w_1, ...)".into(),
        });
    }
    let mut trait_names = Vec::new();
    for name in &names[3 + wavelengths..] {
        match name.trim().strip_prefix(TRAIT_PREFIX) {
            Some(t) if !t.is_empty() => trait_names.push(t.to_string()),
            _ => {
                return Err(Error::Parse {
                    row: 1,
                    msg: format!("unexpected column `{name}`"),
                })
            }
        }
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for result in rdr.records() {
        let rec = result?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let parse_index = |i: usize, what: &str| -> Result<usize> {
            field(i).parse().map_err(|_| Error::Parse {
                row,
                msg: format!("{what} `{}` is not a non-negative integer", field(i)),
            })
        };
        let genotype = field(0).to_string();
        if genotype.is_empty() {
            return Err(Error::Parse {
                row,
                msg: "empty genotype".into(),
            });
        }
        let env = parse_index(1, "env")?;
        let rep = parse_index(2, "rep")?;
        let mut reflectance = Vec::with_capacity(wavelengths);
        for w in 0..wavelengths {
            let cell = field(3 + w);
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                msg: format!("reflectance w_{w} `{cell}` is not numeric"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    msg: format!("reflectance w_{w} is not finite"),
                });
            }
            reflectance.push(v);
        }
        let mut traits = BTreeMap::new();
        for (t, name) in trait_names.iter().enumerate() {
            let cell = field(3 + wavelengths + t);
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                msg: format!("trait `{name}` value `{cell}` is not numeric"),
            })?;
            traits.insert(name.clone(), v);
        }
        if !seen.insert((genotype.clone(), env, rep)) {
            return Err(Error::Parse {
                row,
                msg: format!("duplicate key (genotype {genotype}, env {env}, rep {rep})"),
            });
        }
        records.push(SpectraRecord {
            genotype,
            env,
            rep,
            reflectance,
            traits,
        });
    }
    Ok(Dataset {
        records,
        wavelengths,
        trait_names,
    })
}

pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(file, data)
}

/// Floats are written in Rust's shortest round-trip form, so a reload is exact.
pub fn write_csv_to<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["genotype".to_string(), "env".into(), "rep".into()];
    header.extend((0..data.wavelengths).map(|i| format!("w_{i}")));
    header.extend(data.trait_names.iter().map(|t| format!("{TRAIT_PREFIX}{t}")));
    w.write_record(&header)?;
    for r in &data.records {
        let mut row = Vec::with_capacity(header.len());
        row.push(r.genotype.clone());
        row.push(r.env.to_string());
        row.push(r.rep.to_string());
        row.extend(r.reflectance.iter().map(|v| v.to_string()));
        row.extend(
            data.trait_names
                .iter()
                .map(|t| r.traits.get(t).map_or(String::new(), |v| v.to_string())),
        );
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
