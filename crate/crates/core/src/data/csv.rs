//! Comma-separated dataset format.
//!
//! A header row is mandatory. Required columns are `id`, `group` and `y`; optional columns
//! are `score`, `yhat` and `weight`; columns prefixed `L_` hold legitimate predictors and
//! `S_` protected predictors. Column order is free on input. Empty `score`, `yhat` or
//! `weight` cells mean "absent" (weight then defaults to 1). Every record needs a score or
//! a prediction.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::confusion::{GroupedOutcomes, Record};
use crate::error::{Error, Result, ValidationIssue};

const REQUIRED: [&str; 3] = ["id", "group", "y"];
const OPTIONAL: [&str; 3] = ["score", "yhat", "weight"];

struct Layout {
    id: usize,
    group: usize,
    y: usize,
    score: Option<usize>,
    yhat: Option<usize>,
    weight: Option<usize>,
    legitimate: Vec<(usize, String)>,
    protected: Vec<(usize, String)>,
}

fn header_issue(message: String, column: Option<&str>) -> ValidationIssue {
    ValidationIssue {
        line: Some(1),
        column: column.map(str::to_string),
        message,
    }
}

fn layout(header: &csv::StringRecord) -> std::result::Result<Layout, Vec<ValidationIssue>> {
    let mut issues = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut legitimate = Vec::new();
    let mut protected = Vec::new();
    for (i, name) in header.iter().enumerate() {
        if seen.insert(name, i).is_some() {
            issues.push(header_issue("duplicate column".into(), Some(name)));
        }
        if let Some(rest) = name.strip_prefix("L_") {
            if rest.is_empty() {
                issues.push(header_issue("predictor column needs a name".into(), Some(name)));
            }
            legitimate.push((i, name.to_string()));
        } else if let Some(rest) = name.strip_prefix("S_") {
            if rest.is_empty() {
                issues.push(header_issue("predictor column needs a name".into(), Some(name)));
            }
            protected.push((i, name.to_string()));
        } else if !REQUIRED.contains(&name) && !OPTIONAL.contains(&name) {
            issues.push(header_issue("unknown column".into(), Some(name)));
        }
    }
    for col in REQUIRED {
        if !seen.contains_key(col) {
            issues.push(header_issue("missing required column".into(), Some(col)));
        }
    }
    if !seen.contains_key("score") && !seen.contains_key("yhat") {
        issues.push(header_issue(
            "either a `score` or a `yhat` column is required".into(),
            None,
        ));
    }
    if !issues.is_empty() {
        return Err(issues);
    }
    Ok(Layout {
        id: seen["id"],
        group: seen["group"],
        y: seen["y"],
        score: seen.get("score").copied(),
        yhat: seen.get("yhat").copied(),
        weight: seen.get("weight").copied(),
        legitimate,
        protected,
    })
}

fn parse_binary(v: &str) -> Option<bool> {
    match v {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// Read a dataset, collecting every problem with its line number before failing.
pub fn load_csv(source: impl Read) -> Result<GroupedOutcomes> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_error(e)),
    };
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Validation(vec![ValidationIssue {
            line: None,
            column: None,
            message: "empty input: a header row is required".into(),
        }]));
    }
    let layout = layout(&header).map_err(Error::Validation)?;

    let mut issues = Vec::new();
    let mut records = Vec::new();
    let mut first_line: HashMap<String, u64> = HashMap::new();
    let mut row = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                issues.push(ValidationIssue {
                    line: e.position().map(|p| p.line()),
                    column: None,
                    message: e.to_string(),
                });
                break;
            }
        }
        let line = row.position().map_or(0, |p| p.line());
        let mut issue = |column: &str, message: String| {
            issues.push(ValidationIssue {
                line: Some(line),
                column: Some(column.to_string()),
                message,
            });
        };
        if row.len() != header.len() {
            issues.push(ValidationIssue {
                line: Some(line),
                column: None,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
            continue;
        }
        let id = &row[layout.id];
        if id.is_empty() {
            issue("id", "must not be empty".into());
        } else if let Some(prev) = first_line.get(id) {
            issue("id", format!("duplicate id `{id}` (first seen on line {prev})"));
        } else {
            first_line.insert(id.to_string(), line);
        }
        let group = &row[layout.group];
        if group.is_empty() {
            issue("group", "must not be empty".into());
        }
        let y = parse_binary(&row[layout.y]);
        if y.is_none() {
            issue("y", format!("must be 0 or 1, got `{}`", &row[layout.y]));
        }
        let mut yhat = None;
        if let Some(c) = layout.yhat {
            let v = &row[c];
            if !v.is_empty() {
                yhat = parse_binary(v);
                if yhat.is_none() {
                    issue("yhat", format!("must be 0, 1 or empty, got `{v}`"));
                }
            }
        }
        let mut score = None;
        if let Some(c) = layout.score {
            let v = &row[c];
            if !v.is_empty() {
                match v.parse::<f64>() {
                    Ok(s) if (0.0..=1.0).contains(&s) => score = Some(s),
                    _ => issue("score", format!("must be a number in [0, 1] or empty, got `{v}`")),
                }
            }
        }
        let mut weight = 1.0;
        if let Some(c) = layout.weight {
            let v = &row[c];
            if !v.is_empty() {
                match v.parse::<f64>() {
                    Ok(w) if w.is_finite() && w > 0.0 => weight = w,
                    _ => issue("weight", format!("must be a positive number or empty, got `{v}`")),
                }
            }
        }
        if score.is_none() && yhat.is_none() {
            issues.push(ValidationIssue {
                line: Some(line),
                column: None,
                message: "record needs a score or a yhat".into(),
            });
        }
        let mut predictor = |cols: &[(usize, String)]| -> Vec<f64> {
            cols.iter()
                .map(|(c, name)| match row[*c].parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        issues.push(ValidationIssue {
                            line: Some(line),
                            column: Some(name.clone()),
                            message: format!("must be a finite number, got `{}`", &row[*c]),
                        });
                        0.0
                    }
                })
                .collect()
        };
        let legitimate = predictor(&layout.legitimate);
        let protected = predictor(&layout.protected);
        records.push(Record {
            id: id.to_string(),
            group: group.to_string(),
            y: y.unwrap_or(false),
            score,
            yhat,
            weight,
            legitimate,
            protected,
        });
    }
    if records.is_empty() && issues.is_empty() {
        issues.push(ValidationIssue {
            line: None,
            column: None,
            message: "no records".into(),
        });
    }
    if !issues.is_empty() {
        return Err(Error::Validation(issues));
    }
    Ok(GroupedOutcomes {
        legitimate_names: layout.legitimate.into_iter().map(|(_, n)| n).collect(),
        protected_names: layout.protected.into_iter().map(|(_, n)| n).collect(),
        records,
    })
}

pub fn load_csv_path(path: impl AsRef<Path>) -> Result<GroupedOutcomes> {
    load_csv(std::fs::File::open(path)?)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Validation(vec![ValidationIssue {
            line,
            column: None,
            message: format!("{kind:?}"),
        }]),
    }
}

fn io_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Io(std::io::Error::other(format!("{kind:?}"))),
    }
}

/// Write a dataset. Columns appear as `id,group,y`, then `score`, `yhat` and `weight` when
/// any record carries them, then `L_` and `S_` columns in their stored order. Numbers use
/// the shortest representation that reads back to the same value.
pub fn emit_csv(data: &GroupedOutcomes, sink: impl Write) -> Result<()> {
    data.validate()?;
    let with_score = data.records.iter().any(|r| r.score.is_some());
    let with_yhat = data.records.iter().any(|r| r.yhat.is_some());
    let with_weight = data.records.iter().any(|r| r.weight != 1.0);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    let mut header = vec!["id".to_string(), "group".into(), "y".into()];
    if with_score {
        header.push("score".into());
    }
    if with_yhat {
        header.push("yhat".into());
    }
    if with_weight {
        header.push("weight".into());
    }
    header.extend(data.legitimate_names.iter().cloned());
    header.extend(data.protected_names.iter().cloned());
    w.write_record(&header).map_err(io_error)?;
    let bit = |b: bool| if b { "1" } else { "0" }.to_string();
    for r in &data.records {
        let mut row = vec![r.id.clone(), r.group.clone(), bit(r.y)];
        if with_score {
            row.push(r.score.map(|s| s.to_string()).unwrap_or_default());
        }
        if with_yhat {
            row.push(r.yhat.map(bit).unwrap_or_default());
        }
        if with_weight {
            row.push(r.weight.to_string());
        }
        row.extend(r.legitimate.iter().map(f64::to_string));
        row.extend(r.protected.iter().map(f64::to_string));
        w.write_record(&row).map_err(io_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv_bytes(data: &GroupedOutcomes) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    emit_csv(data, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::confusion::build_tables;
    use crate::feasibility::scenario;

    fn issues(input: &str) -> Vec<ValidationIssue> {
        match load_csv(input.as_bytes()) {
            Err(Error::Validation(v)) => v,
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_outcome_cites_its_line() {
        let mut text = String::from("id,group,y,yhat\n");
        for i in 0..5 {
            text.push_str(&format!("r{i},a,1,0\n"));
        }
        text.push_str("r5,a,2,0\n");
        let v = issues(&text);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].line, Some(7));
        assert_eq!(v[0].column.as_deref(), Some("y"));
    }

    #[test]
    fn header_problems() {
        let v = issues("id,group,y\nr1,a,1\n");
        assert!(v.iter().any(|i| i.message.contains("`score` or a `yhat`")));
        let v = issues("id,y,score\n");
        assert!(v.iter().any(|i| i.column.as_deref() == Some("group")));
        let v = issues("id,group,y,score,colour\n");
        assert!(v.iter().any(|i| i.column.as_deref() == Some("colour")));
        assert!(matches!(load_csv("".as_bytes()), Err(Error::Validation(_))));
        assert!(matches!(load_csv("id,group,y,yhat\n".as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn row_problems_are_all_reported() {
        let v = issues(
            "id,group,y,score,yhat,weight\n\
             a,g,1,1.5,,1\n\
             a,g,0,,,\n\
             c,g,1,0.5,2,0\n",
        );
        let lines: Vec<_> = v.iter().map(|i| (i.line, i.column.clone())).collect();
        assert!(lines.contains(&(Some(2), Some("score".into()))));
        assert!(lines.contains(&(Some(3), Some("id".into()))));
        assert!(lines.contains(&(Some(3), None)));
        assert!(lines.contains(&(Some(4), Some("yhat".into()))));
        assert!(lines.contains(&(Some(4), Some("weight".into()))));
    }

    #[test]
    fn scenario_round_trip_keeps_table() {
        let s = scenario("females_t2").unwrap();
        let data = s.to_records().unwrap();
        let bytes = emit_csv_bytes(&data).unwrap();
        let back = load_csv(bytes.as_slice()).unwrap();
        assert_eq!(back, data);
        assert_eq!(build_tables(&back).unwrap(), s.tables);
    }

    #[test]
    fn quoting_and_column_order() {
        let text = "S_race,yhat,y,group,id,L_priors\n1,1,0,\"x, y\",\"id \"\"1\"\"\",3.5\n";
        let d = load_csv(text.as_bytes()).unwrap();
        assert_eq!(d.records[0].group, "x, y");
        assert_eq!(d.records[0].id, "id \"1\"");
        assert_eq!(d.legitimate_names, ["L_priors"]);
        assert_eq!(d.records[0].protected, vec![1.0]);
        let again = load_csv(emit_csv_bytes(&d).unwrap().as_slice()).unwrap();
        assert_eq!(again, d);
    }

    fn arb_record(i: usize) -> impl Strategy<Value = Record> {
        (
            "[a-c]",
            any::<bool>(),
            prop::option::of(0.0f64..=1.0),
            any::<bool>(),
            prop_oneof![Just(1.0), 0.01f64..100.0],
            prop::collection::vec(-1e6f64..1e6, 2),
        )
            .prop_map(move |(g, y, score, yhat, weight, l)| Record {
                id: format!("r{i}"),
                group: g,
                y,
                yhat: if score.is_none() { Some(yhat) } else { Some(yhat).filter(|_| i % 2 == 0) },
                score,
                weight,
                legitimate: l,
                protected: vec![],
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn emit_then_load_is_identity(recs in (1usize..40).prop_flat_map(|n| {
            (0..n).map(arb_record).collect::<Vec<_>>()
        })) {
            let data = GroupedOutcomes {
                legitimate_names: vec!["L_a".into(), "L_b".into()],
                protected_names: vec![],
                records: recs,
            };
            let bytes = emit_csv_bytes(&data).unwrap();
            prop_assert_eq!(load_csv(bytes.as_slice()).unwrap(), data);
        }
    }
}
