//! Ingestion of externally produced classifier scores.
//!
//! A score table holds one row of natural-log class likelihoods per
//! (object, view) cell. Tables must be complete over their grid: every
//! object needs a score row for every view. Multi-view posteriors sum the
//! log-likelihood vectors of the chosen views and renormalise, which for
//! independent views is exactly the product rule used by the synthetic
//! world.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sensorium::{ClassDistribution, Observation, PairOracle, ViewPair};
use crate::viewsphere::{GridSpec, ViewIndex};

/// One parsed row: the log-likelihood vector for an object seen from a view.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub object: String,
    pub true_class: usize,
    pub view: ViewIndex,
    pub scores: Vec<f64>,
}

/// A complete table of per-view class scores for a set of labelled objects.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    grid: GridSpec,
    num_classes: usize,
    ids: Vec<String>,
    classes: Vec<usize>,
    /// Indexed (object * views + view.flat) * num_classes.
    scores: Vec<f64>,
    index: HashMap<String, usize>,
}

impl ScoreTable {
    /// Assembles a table from rows, validating bounds, duplicates, label
    /// consistency, and completeness over the grid. Objects keep their
    /// first-appearance order.
    pub fn from_rows(grid: GridSpec, num_classes: usize, rows: Vec<ScoreRow>) -> Result<Self> {
        grid.validate()?;
        if num_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "a score table needs at least 2 classes, got {num_classes}"
            )));
        }
        if rows.is_empty() {
            return Err(Error::EmptyInput("score table rows"));
        }

        let views = grid.num_views();
        let mut ids: Vec<String> = Vec::new();
        let mut classes: Vec<usize> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut cells: Vec<Option<Vec<f64>>> = Vec::new();

        for (n, row) in rows.into_iter().enumerate() {
            let line = n + 2; // header is line 1
            grid.check(row.view).map_err(|_| Error::ScoreParse {
                line,
                msg: format!(
                    "view ({}, {}) outside the {}x{} grid",
                    row.view.azimuth, row.view.elevation, grid.azimuth_steps, grid.elevation_steps
                ),
            })?;
            if row.true_class >= num_classes {
                return Err(Error::ScoreParse {
                    line,
                    msg: format!(
                        "true_class {} out of range for {num_classes} classes",
                        row.true_class
                    ),
                });
            }
            if row.scores.len() != num_classes {
                return Err(Error::ScoreParse {
                    line,
                    msg: format!(
                        "expected {num_classes} scores, got {}",
                        row.scores.len()
                    ),
                });
            }
            for &s in &row.scores {
                if !s.is_finite() {
                    return Err(Error::ScoreParse {
                        line,
                        msg: format!("non-finite score {s}"),
                    });
                }
            }

            let obj = match index.get(&row.object) {
                Some(&i) => {
                    if classes[i] != row.true_class {
                        return Err(Error::ScoreParse {
                            line,
                            msg: format!(
                                "object {:?} labelled {} here but {} earlier",
                                row.object, row.true_class, classes[i]
                            ),
                        });
                    }
                    i
                }
                None => {
                    let i = ids.len();
                    index.insert(row.object.clone(), i);
                    ids.push(row.object.clone());
                    classes.push(row.true_class);
                    cells.resize(cells.len() + views, None);
                    i
                }
            };

            let cell = obj * views + row.view.flat(&grid);
            if cells[cell].is_some() {
                return Err(Error::ScoreParse {
                    line,
                    msg: format!(
                        "duplicate cell: object {:?} at view ({}, {})",
                        row.object, row.view.azimuth, row.view.elevation
                    ),
                });
            }
            cells[cell] = Some(row.scores);
        }

        // Completeness: every object must cover the whole grid.
        let mut scores = Vec::with_capacity(cells.len() * num_classes);
        for (obj, id) in ids.iter().enumerate() {
            for v in 0..views {
                match cells[obj * views + v].take() {
                    Some(s) => scores.extend(s),
                    None => {
                        let view = ViewIndex::from_flat(&grid, v);
                        return Err(Error::IncompleteScores {
                            object: id.clone(),
                            azimuth: view.azimuth,
                            elevation: view.elevation,
                        });
                    }
                }
            }
        }

        Ok(ScoreTable {
            grid,
            num_classes,
            ids,
            classes,
            scores,
            index,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn num_objects(&self) -> usize {
        self.ids.len()
    }

    pub fn object_id(&self, object: usize) -> &str {
        &self.ids[object]
    }

    pub fn object_class(&self, object: usize) -> usize {
        self.classes[object]
    }

    pub fn object_index(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownObject(id.to_string()))
    }

    /// The stored log-likelihood vector for one cell.
    pub fn scores(&self, object: usize, view: ViewIndex) -> Result<&[f64]> {
        self.check_object(object)?;
        self.grid.check(view)?;
        let idx = (object * self.grid.num_views() + view.flat(&self.grid)) * self.num_classes;
        Ok(&self.scores[idx..idx + self.num_classes])
    }

    fn check_object(&self, object: usize) -> Result<()> {
        if object >= self.ids.len() {
            return Err(Error::UnknownObject(format!("#{object}")));
        }
        Ok(())
    }

    /// Class posterior for an object seen from `views`: log-likelihood
    /// vectors are summed across views and softmax-normalised.
    pub fn posterior_from_scores(
        &self,
        object: usize,
        views: &[ViewIndex],
    ) -> Result<ClassDistribution> {
        if views.is_empty() {
            return Err(Error::EmptyInput("views for score posterior"));
        }
        let mut total = vec![0.0; self.num_classes];
        for &view in views {
            let row = self.scores(object, view)?;
            for (t, s) in total.iter_mut().zip(row) {
                *t += s;
            }
        }
        ClassDistribution::from_log_scores(&total)
    }

    /// Binds the table to one object, yielding a [`PairOracle`] for it.
    pub fn object_oracle(&self, object: usize) -> Result<ObjectScores<'_>> {
        self.check_object(object)?;
        Ok(ObjectScores {
            table: self,
            object,
        })
    }

    /// Parses a table from CSV. The header fixes the class count; the grid
    /// must be supplied because the file does not declare its dimensions.
    pub fn from_csv_reader<R: Read>(grid: GridSpec, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::ScoreParse {
            line: 1,
            msg: e.to_string(),
        })?;
        let fixed = ["object_id", "true_class", "azimuth", "elevation"];
        if headers.len() < fixed.len() + 2 {
            return Err(Error::ScoreParse {
                line: 1,
                msg: format!("expected at least {} columns, got {}", fixed.len() + 2, headers.len()),
            });
        }
        for (i, want) in fixed.iter().enumerate() {
            if &headers[i] != *want {
                return Err(Error::ScoreParse {
                    line: 1,
                    msg: format!("column {i} must be {want:?}, got {:?}", &headers[i]),
                });
            }
        }
        let num_classes = headers.len() - fixed.len();
        for c in 0..num_classes {
            let want = format!("s{c}");
            if &headers[fixed.len() + c] != want.as_str() {
                return Err(Error::ScoreParse {
                    line: 1,
                    msg: format!(
                        "score column {} must be {want:?}, got {:?}",
                        fixed.len() + c,
                        &headers[fixed.len() + c]
                    ),
                });
            }
        }

        let mut rows = Vec::new();
        for (n, record) in rdr.records().enumerate() {
            let line = n + 2;
            let record = record.map_err(|e| Error::ScoreParse {
                line,
                msg: e.to_string(),
            })?;
            if record.len() != fixed.len() + num_classes {
                return Err(Error::ScoreParse {
                    line,
                    msg: format!(
                        "expected {} fields, got {}",
                        fixed.len() + num_classes,
                        record.len()
                    ),
                });
            }
            let parse_usize = |i: usize, what: &str| -> Result<usize> {
                record[i].trim().parse().map_err(|_| Error::ScoreParse {
                    line,
                    msg: format!("bad {what}: {:?}", &record[i]),
                })
            };
            let true_class = parse_usize(1, "true_class")?;
            let azimuth = parse_usize(2, "azimuth")?;
            let elevation = parse_usize(3, "elevation")?;
            let mut scores = Vec::with_capacity(num_classes);
            for c in 0..num_classes {
                let s: f64 = record[fixed.len() + c]
                    .trim()
                    .parse()
                    .map_err(|_| Error::ScoreParse {
                        line,
                        msg: format!("bad score: {:?}", &record[fixed.len() + c]),
                    })?;
                scores.push(s);
            }
            rows.push(ScoreRow {
                object: record[0].to_string(),
                true_class,
                view: ViewIndex::new(azimuth, elevation),
                scores,
            });
        }
        Self::from_rows(grid, num_classes, rows)
    }

    pub fn load_csv<P: AsRef<Path>>(grid: GridSpec, path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(grid, std::io::BufReader::new(file))
    }

    /// Writes the table as CSV. Floats use the shortest representation that
    /// parses back to the identical bits, so save/load round-trips exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "object_id,true_class,azimuth,elevation")?;
        for c in 0..self.num_classes {
            write!(w, ",s{c}")?;
        }
        writeln!(w)?;
        for obj in 0..self.ids.len() {
            for view in self.grid.all_views() {
                write!(
                    w,
                    "{},{},{},{}",
                    self.ids[obj], self.classes[obj], view.azimuth, view.elevation
                )?;
                for s in self.scores(obj, view).expect("table is complete") {
                    write!(w, ",{s}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// A [`ScoreTable`] bound to one object. Observation features are ignored;
/// only the view matters, since scores are precomputed per view.
#[derive(Debug, Clone, Copy)]
pub struct ObjectScores<'a> {
    table: &'a ScoreTable,
    object: usize,
}

impl ObjectScores<'_> {
    pub fn true_class(&self) -> usize {
        self.table.object_class(self.object)
    }
}

impl PairOracle for ObjectScores<'_> {
    fn num_classes(&self) -> usize {
        self.table.num_classes
    }

    fn single_distribution(&self, obs: &Observation) -> Result<ClassDistribution> {
        self.table.posterior_from_scores(self.object, &[obs.view])
    }

    fn pair_distribution(&self, pair: &ViewPair) -> Result<ClassDistribution> {
        self.table
            .posterior_from_scores(self.object, &[pair.obs_a().view, pair.obs_b().view])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn small_grid() -> GridSpec {
        GridSpec::new(4, 2).unwrap()
    }

    fn make_rows(grid: &GridSpec, num_objects: usize, num_classes: usize) -> Vec<ScoreRow> {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let mut rows = Vec::new();
        for o in 0..num_objects {
            for view in grid.all_views() {
                rows.push(ScoreRow {
                    object: format!("obj{o}"),
                    true_class: o % num_classes,
                    view,
                    scores: (0..num_classes).map(|_| rng.random_range(-8.0..0.0)).collect(),
                });
            }
        }
        rows
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let grid = small_grid();
        let table = ScoreTable::from_rows(grid, 3, make_rows(&grid, 2, 3)).unwrap();
        let mut first = Vec::new();
        table.write_csv(&mut first).unwrap();
        let reloaded = ScoreTable::from_csv_reader(grid, first.as_slice()).unwrap();
        assert_eq!(table, reloaded);
        let mut second = Vec::new();
        reloaded.write_csv(&mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn file_round_trip() {
        let grid = small_grid();
        let table = ScoreTable::from_rows(grid, 2, make_rows(&grid, 1, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        table.save_csv(&path).unwrap();
        let reloaded = ScoreTable::load_csv(grid, &path).unwrap();
        assert_eq!(table, reloaded);
    }

    #[test]
    fn multi_view_posterior_is_the_product_of_single_views() {
        let grid = small_grid();
        let table = ScoreTable::from_rows(grid, 4, make_rows(&grid, 3, 4)).unwrap();
        let va = ViewIndex::new(0, 0);
        let vb = ViewIndex::new(2, 1);
        let joint = table.posterior_from_scores(1, &[va, vb]).unwrap();
        let a = table.posterior_from_scores(1, &[va]).unwrap();
        let b = table.posterior_from_scores(1, &[vb]).unwrap();
        let mut prod: Vec<f64> = a
            .probs()
            .iter()
            .zip(b.probs())
            .map(|(x, y)| x * y)
            .collect();
        let total: f64 = prod.iter().sum();
        for p in &mut prod {
            *p /= total;
        }
        for (got, want) in joint.probs().iter().zip(&prod) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn single_view_posterior_is_a_softmax_of_the_row() {
        let grid = small_grid();
        let table = ScoreTable::from_rows(grid, 3, make_rows(&grid, 1, 3)).unwrap();
        let view = ViewIndex::new(3, 0);
        let row = table.scores(0, view).unwrap().to_vec();
        let d = table.posterior_from_scores(0, &[view]).unwrap();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (got, e) in d.probs().iter().zip(&exps) {
            assert!((got - e / total).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_cell_is_reported_with_its_location() {
        let grid = small_grid();
        let mut rows = make_rows(&grid, 1, 2);
        rows.retain(|r| !(r.view == ViewIndex::new(2, 1)));
        match ScoreTable::from_rows(grid, 2, rows) {
            Err(Error::IncompleteScores {
                object,
                azimuth,
                elevation,
            }) => {
                assert_eq!(object, "obj0");
                assert_eq!((azimuth, elevation), (2, 1));
            }
            other => panic!("expected IncompleteScores, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_inconsistent_rows_are_rejected() {
        let grid = small_grid();
        let mut rows = make_rows(&grid, 1, 2);
        rows.push(rows[0].clone());
        assert!(matches!(
            ScoreTable::from_rows(grid, 2, rows),
            Err(Error::ScoreParse { .. })
        ));

        let mut rows = make_rows(&grid, 1, 2);
        rows[3].true_class = 1; // disagrees with the other rows of obj0
        assert!(matches!(
            ScoreTable::from_rows(grid, 2, rows),
            Err(Error::ScoreParse { .. })
        ));
    }

    #[test]
    fn csv_parse_errors_carry_line_numbers() {
        let grid = small_grid();
        let header = "object_id,true_class,azimuth,elevation,s0,s1\n";

        let bad_header = "object,true_class,azimuth,elevation,s0,s1\nx,0,0,0,1,2\n";
        assert!(matches!(
            ScoreTable::from_csv_reader(grid, bad_header.as_bytes()),
            Err(Error::ScoreParse { line: 1, .. })
        ));

        let bad_number = format!("{header}obj0,0,0,zero,1,2\n");
        assert!(matches!(
            ScoreTable::from_csv_reader(grid, bad_number.as_bytes()),
            Err(Error::ScoreParse { line: 2, .. })
        ));

        let bad_width = format!("{header}obj0,0,0,0,1\n");
        assert!(matches!(
            ScoreTable::from_csv_reader(grid, bad_width.as_bytes()),
            Err(Error::ScoreParse { line: 2, .. })
        ));

        let bad_view = format!("{header}obj0,0,9,0,1,2\n");
        assert!(matches!(
            ScoreTable::from_csv_reader(grid, bad_view.as_bytes()),
            Err(Error::ScoreParse { line: 2, .. })
        ));

        let bad_class = format!("{header}obj0,5,0,0,1,2\n");
        assert!(matches!(
            ScoreTable::from_csv_reader(grid, bad_class.as_bytes()),
            Err(Error::ScoreParse { line: 2, .. })
        ));
    }

    #[test]
    fn lookups_validate_objects_views_and_emptiness() {
        let grid = small_grid();
        let table = ScoreTable::from_rows(grid, 2, make_rows(&grid, 2, 2)).unwrap();
        assert_eq!(table.object_index("obj1").unwrap(), 1);
        assert!(matches!(
            table.object_index("missing"),
            Err(Error::UnknownObject(_))
        ));
        assert!(table.posterior_from_scores(5, &[ViewIndex::new(0, 0)]).is_err());
        assert!(table
            .posterior_from_scores(0, &[ViewIndex::new(0, 9)])
            .is_err());
        assert!(matches!(
            table.posterior_from_scores(0, &[]),
            Err(Error::EmptyInput(_))
        ));
    }
}
