//! Parsers and writers for the on-disk formats: feature tables, connectivity
//! matrices and whole cohort directories.
//!
//! All formats are UTF-8 delimited text. The delimiter is auto-detected among
//! comma/tab/semicolon on the header line and recorded in the parse result.
//! Parsing is total: malformed input yields a diagnostic with a line number,
//! never a panic or a silent coercion.
//!
//! Cohort directory layout (produced by `synth`, consumed by `run`):
//!
//! ```text
//! cohort/
//!   subjects.csv            id, status, then one column per covariate
//!   <name>.block.csv        feature table, first column subject id
//!   connectivity/<id>.csv   optional, `# directed|undirected` pragma on line 1
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cohort::{
    BlockKind, Cohort, ConnectivityMatrix, Covariate, FeatureMatrix, SubjectRecord,
};
use crate::error::{Error, Result};

/// Symmetry tolerance for undirected connectivity files.
pub const SYMMETRY_TOL: f64 = 1e-9;

const DELIMITERS: [char; 3] = [',', '\t', ';'];

fn detect_delimiter(header: &str) -> char {
    DELIMITERS
        .into_iter()
        .max_by_key(|&d| header.matches(d).count())
        .unwrap()
}

fn split(line: &str, delim: char) -> Vec<&str> {
    line.split(delim).map(str::trim).collect()
}

fn parse_cell(path: &Path, line_no: usize, cell: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| {
        Error::parse(path, line_no, format!("non-numeric cell {cell:?}"))
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Load a feature table: first column subject id, header row of feature names.
pub fn load_feature_table(path: &Path, block_kind: BlockKind) -> Result<FeatureMatrix> {
    let lines = read_lines(path)?;
    let mut iter = lines.iter().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = iter
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let delim = detect_delimiter(header);
    let cols = split(header, delim);
    if cols.len() < 2 {
        return Err(Error::parse(path, 1, "header must name an id column and at least one feature"));
    }
    let feature_names: Vec<String> = cols[1..].iter().map(|s| s.to_string()).collect();
    let p = feature_names.len();

    let mut subject_ids: Vec<String> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (idx, line) in iter {
        let line_no = idx + 1;
        let cells = split(line, delim);
        if cells.len() != p + 1 {
            return Err(Error::parse(
                path,
                line_no,
                format!("row has {} cells, expected {} (ragged row)", cells.len(), p + 1),
            ));
        }
        let id = cells[0].to_string();
        if subject_ids.contains(&id) {
            return Err(Error::parse(path, line_no, format!("duplicate subject id {id:?}")));
        }
        for cell in &cells[1..] {
            values.push(parse_cell(path, line_no, cell)?);
        }
        subject_ids.push(id);
    }
    if subject_ids.is_empty() {
        return Err(Error::parse(path, 1, "table has a header but no data rows"));
    }
    FeatureMatrix::new(subject_ids, feature_names, values, block_kind)
}

pub fn write_feature_table(path: &Path, matrix: &FeatureMatrix) -> Result<()> {
    let mut out = String::new();
    out.push_str("id");
    for name in &matrix.feature_names {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for (i, id) in matrix.subject_ids.iter().enumerate() {
        out.push_str(id);
        for j in 0..matrix.n_features() {
            let _ = write!(out, ",{}", matrix.get(i, j));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load a connectivity matrix. Line 1 must carry a `# directed` or
/// `# undirected` pragma, line 2 the ROI names, then the square matrix.
/// The diagonal is forced to zero; undirected matrices must be symmetric
/// within [`SYMMETRY_TOL`].
pub fn load_connectivity(path: &Path) -> Result<ConnectivityMatrix> {
    let lines = read_lines(path)?;
    let mut iter = lines.iter().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (_, pragma) = iter
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let directed = match pragma.trim() {
        "# directed" => true,
        "# undirected" => false,
        other => {
            return Err(Error::parse(
                path,
                1,
                format!("expected `# directed` or `# undirected` pragma, found {other:?}"),
            ))
        }
    };

    let (header_idx, header) = iter
        .next()
        .ok_or_else(|| Error::parse(path, 2, "missing ROI header line"))?;
    let delim = detect_delimiter(header);
    let roi_names: Vec<String> = split(header, delim).iter().map(|s| s.to_string()).collect();
    let n = roi_names.len();
    if n == 0 {
        return Err(Error::parse(path, header_idx + 1, "empty ROI header"));
    }

    let mut weights = vec![0.0; n * n];
    let mut rows_seen = 0usize;
    for (idx, line) in iter {
        let line_no = idx + 1;
        if rows_seen == n {
            return Err(Error::parse(path, line_no, format!("more than {n} matrix rows (not square)")));
        }
        let cells = split(line, delim);
        if cells.len() != n {
            return Err(Error::parse(
                path,
                line_no,
                format!("matrix row has {} cells, expected {n} (not square)", cells.len()),
            ));
        }
        for (j, cell) in cells.iter().enumerate() {
            weights[rows_seen * n + j] = parse_cell(path, line_no, cell)?;
        }
        rows_seen += 1;
    }
    if rows_seen != n {
        return Err(Error::parse(
            path,
            lines.len(),
            format!("matrix has {rows_seen} rows, expected {n} (not square)"),
        ));
    }

    // Self-connectivity carries no information for the graph metrics.
    for i in 0..n {
        weights[i * n + i] = 0.0;
    }

    if !directed {
        for i in 0..n {
            for j in (i + 1)..n {
                let a = weights[i * n + j];
                let b = weights[j * n + i];
                if (a - b).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidData(format!(
                        "{}: undirected matrix is asymmetric at ({i},{j}): {a} vs {b}",
                        path.display()
                    )));
                }
            }
        }
    }

    Ok(ConnectivityMatrix { roi_names, weights, directed })
}

pub fn write_connectivity(path: &Path, matrix: &ConnectivityMatrix) -> Result<()> {
    let mut out = String::new();
    out.push_str(if matrix.directed { "# directed\n" } else { "# undirected\n" });
    out.push_str(&matrix.roi_names.join(","));
    out.push('\n');
    let n = matrix.n();
    for i in 0..n {
        for j in 0..n {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", matrix.weight(i, j));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load `subjects.csv`: id, status, then covariate columns. Empty covariate
/// cells are treated as missing; cells that parse as numbers become numeric
/// covariates, the rest categorical.
pub fn load_subjects(path: &Path) -> Result<Vec<SubjectRecord>> {
    let lines = read_lines(path)?;
    let mut iter = lines.iter().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = iter
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let delim = detect_delimiter(header);
    let cols = split(header, delim);
    if cols.len() < 2 || cols[0] != "id" || cols[1] != "status" {
        return Err(Error::parse(path, 1, "header must start with `id,status`"));
    }
    let covariate_names: Vec<&str> = cols[2..].to_vec();

    let mut subjects = Vec::new();
    for (idx, line) in iter {
        let line_no = idx + 1;
        let cells = split(line, delim);
        if cells.len() != cols.len() {
            return Err(Error::parse(
                path,
                line_no,
                format!("row has {} cells, expected {}", cells.len(), cols.len()),
            ));
        }
        let mut covariates = BTreeMap::new();
        for (name, cell) in covariate_names.iter().zip(&cells[2..]) {
            if cell.is_empty() {
                continue;
            }
            let value = match cell.parse::<f64>() {
                Ok(v) => Covariate::Number(v),
                Err(_) => Covariate::Category(cell.to_string()),
            };
            covariates.insert(name.to_string(), value);
        }
        subjects.push(SubjectRecord {
            id: cells[0].to_string(),
            status: cells[1].to_string(),
            covariates,
        });
    }
    Ok(subjects)
}

pub fn write_subjects(path: &Path, subjects: &[SubjectRecord]) -> Result<()> {
    let mut covariate_names: Vec<String> = Vec::new();
    for s in subjects {
        for name in s.covariates.keys() {
            if !covariate_names.contains(name) {
                covariate_names.push(name.clone());
            }
        }
    }
    covariate_names.sort();

    let mut out = String::from("id,status");
    for name in &covariate_names {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for s in subjects {
        let _ = write!(out, "{},{}", s.id, s.status);
        for name in &covariate_names {
            out.push(',');
            match s.covariates.get(name) {
                Some(Covariate::Number(v)) => {
                    let _ = write!(out, "{v}");
                }
                Some(Covariate::Category(c)) => out.push_str(c),
                None => {}
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn block_kind_for(name: &str) -> BlockKind {
    match name {
        "morphometry" => BlockKind::Morphometry,
        "graph" => BlockKind::Graph,
        "topology" => BlockKind::Topology,
        _ => BlockKind::Combined,
    }
}

/// Load a whole cohort directory.
pub fn load_cohort_dir(dir: &Path) -> Result<Cohort> {
    let subjects = load_subjects(&dir.join("subjects.csv"))?;

    let mut blocks = BTreeMap::new();
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .collect();
    entries.sort();
    for path in entries {
        let Some(file) = path.file_name().and_then(|f| f.to_str()) else {
            continue;
        };
        if let Some(name) = file.strip_suffix(".block.csv") {
            let matrix = load_feature_table(&path, block_kind_for(name))?;
            blocks.insert(name.to_string(), matrix);
        }
    }

    let mut connectivity = BTreeMap::new();
    let conn_dir = dir.join("connectivity");
    if conn_dir.is_dir() {
        let mut files: Vec<_> = fs::read_dir(&conn_dir)
            .map_err(|e| Error::io(&conn_dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .collect();
        files.sort();
        for path in files {
            let Some(stem) = path.file_stem().and_then(|f| f.to_str()) else {
                continue;
            };
            connectivity.insert(stem.to_string(), load_connectivity(&path)?);
        }
    }

    let cohort = Cohort { subjects, blocks, connectivity };
    let report = cohort.validate();
    if !report.is_clean() {
        let text: Vec<String> = report.issues.iter().map(|i| i.to_string()).collect();
        return Err(Error::InvalidData(format!(
            "cohort directory {} failed validation:\n  {}",
            dir.display(),
            text.join("\n  ")
        )));
    }
    Ok(cohort)
}

pub fn save_cohort_dir(dir: &Path, cohort: &Cohort) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_subjects(&dir.join("subjects.csv"), &cohort.subjects)?;
    for (name, block) in &cohort.blocks {
        write_feature_table(&dir.join(format!("{name}.block.csv")), block)?;
    }
    if !cohort.connectivity.is_empty() {
        let conn_dir = dir.join("connectivity");
        fs::create_dir_all(&conn_dir).map_err(|e| Error::io(&conn_dir, e))?;
        for (id, matrix) in &cohort.connectivity {
            write_connectivity(&conn_dir.join(format!("{id}.csv")), matrix)?;
        }
    }
    Ok(())
}
