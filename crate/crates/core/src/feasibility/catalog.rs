//! Built-in worked examples: small two-group confusion tables showing how base rates,
//! separation and constant or random assignment interact with the fairness definitions,
//! plus a reconstruction of an empirical two-race table from its published rates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::confusion::{ConfusionTable, GroupTables, GroupedOutcomes, Record};
use crate::error::{Error, Result};
use crate::fairness::GroupSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub tables: GroupTables,
    pub notes: String,
    /// Known mismatches between the stored cells and captions printed alongside them.
    pub discrepancies: Vec<String>,
}

impl Scenario {
    /// Expand every table into unit-weight records with predictions, one per counted case.
    /// Ids are `<group>-<index>` with a zero-padded running index per group.
    pub fn to_records(&self) -> Result<GroupedOutcomes> {
        scenarios_to_records(std::slice::from_ref(self))
    }

    /// Tables with their derived quantities, as shown by the CLI and the service.
    pub fn summary(&self) -> Result<ScenarioSummary> {
        let groups = self
            .tables
            .iter()
            .map(|(g, t)| {
                let summary = GroupSummary {
                    table: *t,
                    quantities: t.quantities()?,
                };
                Ok((g.clone(), summary))
            })
            .collect::<Result<_>>()?;
        Ok(ScenarioSummary {
            name: self.name.clone(),
            notes: self.notes.clone(),
            discrepancies: self.discrepancies.clone(),
            groups,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub notes: String,
    pub discrepancies: Vec<String>,
    pub groups: BTreeMap<String, GroupSummary>,
}

/// Combine several scenarios into one dataset. Group labels must not collide.
pub fn scenarios_to_records(scenarios: &[Scenario]) -> Result<GroupedOutcomes> {
    let mut tables = GroupTables::new();
    for s in scenarios {
        for (g, t) in &s.tables {
            if tables.insert(g.clone(), *t).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "group `{g}` appears in more than one scenario"
                )));
            }
        }
    }
    let mut records = Vec::new();
    for (g, t) in &tables {
        t.require_integral()?;
        let mut i = 0usize;
        for (y, yhat, count) in [
            (true, true, t.tp()),
            (true, false, t.fn_()),
            (false, true, t.fp()),
            (false, false, t.tn()),
        ] {
            for _ in 0..count as usize {
                records.push(Record::new(format!("{g}-{i:06}"), g.clone(), y).with_yhat(yhat));
                i += 1;
            }
        }
    }
    Ok(GroupedOutcomes::new(records))
}

/// Rebuild integer cells from a group size and rounded published rates:
/// positives = round(n * (1 - success_base_rate)), fn = round(positives * fnr),
/// fp = round(negatives * fpr); the remaining cells follow by subtraction.
pub fn reconstruct_from_rates(
    n: u64,
    success_base_rate: f64,
    fnr: f64,
    fpr: f64,
) -> Result<ConfusionTable> {
    for (name, v) in [("success_base_rate", success_base_rate), ("fnr", fnr), ("fpr", fpr)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
        }
    }
    let n = n as f64;
    let positives = (n * (1.0 - success_base_rate)).round();
    let negatives = n - positives;
    let fn_ = (positives * fnr).round();
    let fp = (negatives * fpr).round();
    ConfusionTable::new(positives - fn_, fn_, fp, negatives - fp)
}

/// Published margins of the empirical arraignment table: (group, n, success base rate,
/// no-arrest prediction accuracy, fnr, fpr).
pub const EMPIRICAL_MARGINS: [(&str, u64, f64, f64, f64, f64); 2] = [
    ("black", 13_396, 0.89, 0.93, 0.49, 0.24),
    ("white", 6_604, 0.94, 0.94, 0.93, 0.02),
];

struct Entry {
    name: &'static str,
    group: &'static str,
    cells: [f64; 4],
    notes: &'static str,
    discrepancies: &'static [&'static str],
}

const ENTRIES: [Entry; 14] = [
    Entry {
        name: "females_t2",
        group: "female",
        cells: [300.0, 200.0, 200.0, 300.0],
        notes: "Females on parole: success base rate .50, equal FNR/FPR of .40, cost ratio 1:1.",
        discrepancies: &[],
    },
    Entry {
        name: "males_t3",
        group: "male",
        cells: [600.0, 400.0, 200.0, 300.0],
        notes: "Males on parole: the female failure row doubled; FNR/FPR unchanged at .40, \
                conditional use errors .25/.57, cost ratio 2:1.",
        discrepancies: &[],
    },
    Entry {
        name: "males_tuned_t4",
        group: "male",
        cells: [800.0, 200.0, 200.0, 300.0],
        notes: "Males after tuning: cost ratio back to 1:1 and success prediction error .40 \
                matching females, at the price of FNR .20.",
        discrepancies: &[],
    },
    Entry {
        name: "allfail_m_t5",
        group: "male",
        cells: [400.0, 0.0, 100.0, 0.0],
        notes: "Males, everyone assigned failure, base rate .80, N = 500.",
        discrepancies: &[],
    },
    Entry {
        name: "allfail_f_t6",
        group: "female",
        cells: [40.0, 0.0, 10.0, 0.0],
        notes: "Females, everyone assigned failure, base rate .80, N = 50.",
        discrepancies: &[],
    },
    Entry {
        name: "random30_m_t7",
        group: "male",
        cells: [120.0, 280.0, 30.0, 70.0],
        notes: "Males, failure assigned with probability .30 (expected counts), base rate .80.",
        discrepancies: &[],
    },
    Entry {
        name: "random30_f_t8",
        group: "female",
        cells: [12.0, 28.0, 3.0, 7.0],
        notes: "Females, failure assigned with probability .30 (expected counts), base rate .80.",
        discrepancies: &[],
    },
    Entry {
        name: "random30_f_modified",
        group: "female",
        cells: [12.0, 28.0, 30.0, 70.0],
        notes: "Females with probability-.30 assignment and the success row scaled to 30/70: \
                failure base rate .29, conditional use accuracies .29/.71.",
        discrepancies: &[],
    },
    Entry {
        name: "separation_m_t9",
        group: "male",
        cells: [400.0, 0.0, 0.0, 100.0],
        notes: "Males, separable data classified perfectly, base rate .80.",
        discrepancies: &[],
    },
    Entry {
        name: "separation_f_t10",
        group: "female",
        cells: [40.0, 0.0, 0.0, 10.0],
        notes: "Females, separable data classified perfectly, base rate .80.",
        discrepancies: &[],
    },
    Entry {
        name: "nosep_equal_f_t11",
        group: "female",
        cells: [300.0, 200.0, 200.0, 200.0],
        notes: "Females, no separation, base rate .56, N = 900.",
        discrepancies: &[],
    },
    Entry {
        name: "nosep_equal_m_t12",
        group: "male",
        cells: [600.0, 400.0, 400.0, 400.0],
        notes: "Males, no separation, same base rate .56 as females.",
        discrepancies: &["caption gives N = 1400 but the printed cells sum to 1800; cells kept"],
    },
    Entry {
        name: "nosep_diff_f_t13a",
        group: "female",
        cells: [300.0, 200.0, 200.0, 200.0],
        notes: "Females, no separation, base rate 500/900 = .56.",
        discrepancies: &[],
    },
    Entry {
        name: "nosep_diff_m_t13b",
        group: "male",
        cells: [600.0, 400.0, 600.0, 600.0],
        notes: "Males, no separation, base rate 1000/2200 = .45: equal FNR/FPR with females but \
                unequal conditional use accuracy.",
        discrepancies: &[
            "printed success-column conditional use accuracy is .40 but d/(b+d) = 600/1000 = .60; cells kept",
        ],
    },
];

pub const EMPIRICAL_NAME: &str = "empirical_t13";

/// All catalog names in catalog order.
pub fn catalog() -> Vec<&'static str> {
    ENTRIES
        .iter()
        .map(|e| e.name)
        .chain(std::iter::once(EMPIRICAL_NAME))
        .collect()
}

pub fn scenario(name: &str) -> Result<Scenario> {
    if name == EMPIRICAL_NAME {
        return empirical();
    }
    let e = ENTRIES
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownScenario {
            name: name.to_string(),
            catalog: catalog().join(", "),
        })?;
    let [a, b, c, d] = e.cells;
    Ok(Scenario {
        name: e.name.to_string(),
        tables: BTreeMap::from([(e.group.to_string(), ConfusionTable::new(a, b, c, d)?)]),
        notes: e.notes.to_string(),
        discrepancies: e.discrepancies.iter().map(|s| s.to_string()).collect(),
    })
}

fn empirical() -> Result<Scenario> {
    let mut tables = GroupTables::new();
    let mut derivation = Vec::new();
    for (group, n, base, _npv, fnr, fpr) in EMPIRICAL_MARGINS {
        let t = reconstruct_from_rates(n, base, fnr, fpr)?;
        derivation.push(format!(
            "{group}: n={n}, positives=round({n}*(1-{base}))={p}, fn=round({p}*{fnr})={fn_}, \
             fp=round({neg}*{fpr})={fp}",
            p = t.positives(),
            fn_ = t.fn_(),
            neg = t.negatives(),
            fp = t.fp(),
        ));
        tables.insert(group.to_string(), t);
    }
    Ok(Scenario {
        name: EMPIRICAL_NAME.to_string(),
        tables,
        notes: format!(
            "Arraignment outcomes (violent re-arrest = failure) reconstructed from published \
             group sizes and two-decimal rates. {}",
            derivation.join("; ")
        ),
        discrepancies: vec![
            "published FP:FN (black) and FN:FP (white) ratios are 'a little more than' 4.2 and \
             3.1; the two-decimal reconstruction gives about 3.96 and 2.97"
                .to_string(),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confusion::build_tables;

    #[test]
    fn catalog_has_fifteen_entries() {
        let names = catalog();
        assert_eq!(names.len(), 15);
        for n in names {
            assert_eq!(scenario(n).unwrap().name, n);
        }
    }

    #[test]
    fn unknown_scenario_lists_catalog() {
        let err = scenario("nonexistent").unwrap_err().to_string();
        assert!(err.contains("females_t2") && err.contains("empirical_t13"));
    }

    #[test]
    fn allfail_males() {
        let s = scenario("allfail_m_t5").unwrap();
        let t = s.tables["male"];
        assert_eq!(t, ConfusionTable::new(400.0, 0.0, 100.0, 0.0).unwrap());
        assert_eq!(t.quantities().unwrap().ppv(), Some(0.8));
    }

    #[test]
    fn modified_random_females() {
        let q = scenario("random30_f_modified").unwrap().tables["female"]
            .quantities()
            .unwrap();
        assert_eq!(format!("{:.2}", q.base_rate_fail), "0.29");
        assert_eq!(format!("{:.2}", q.ppv().unwrap()), "0.29");
        assert_eq!(format!("{:.2}", q.npv().unwrap()), "0.71");
    }

    #[test]
    fn separation_is_perfect() {
        let q = scenario("separation_f_t10").unwrap().tables["female"]
            .quantities()
            .unwrap();
        for v in [q.tpr(), q.tnr(), q.ppv(), q.npv()] {
            assert_eq!(v, Some(1.0));
        }
    }

    #[test]
    fn empirical_reconstruction_cells() {
        let s = scenario(EMPIRICAL_NAME).unwrap();
        assert_eq!(s.tables["black"], ConfusionTable::new(752.0, 722.0, 2861.0, 9061.0).unwrap());
        assert_eq!(s.tables["white"], ConfusionTable::new(28.0, 368.0, 124.0, 6084.0).unwrap());
        assert!(s.notes.contains("1474"));
    }

    #[test]
    fn records_round_trip_to_tables() {
        let s = scenario("males_t3").unwrap();
        let data = s.to_records().unwrap();
        assert_eq!(data.len(), 1500);
        assert_eq!(build_tables(&data).unwrap(), s.tables);
        let clash = scenarios_to_records(&[scenario("males_t3").unwrap(), scenario("allfail_m_t5").unwrap()]);
        assert!(clash.is_err());
    }
}
