mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::fixture_path;
use mhqn::scenario::{load, parse_settings, validate_files, Event};

/// Copies the fixtures into a scratch directory so tests can break them.
fn scratch() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for e in fs::read_dir(fixture_path("")).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
        }
    }
    dir
}

fn edit(path: &Path, from: &str, to: &str) {
    let text = fs::read_to_string(path).unwrap();
    assert!(text.contains(from), "{from}");
    fs::write(path, text.replacen(from, to, 1)).unwrap();
}

#[test]
fn shipped_fixtures_are_clean() {
    let files: Vec<PathBuf> = fs::read_dir(fixture_path(""))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    assert!(files.len() >= 9);
    let diags = validate_files(&files);
    assert!(diags.is_empty(), "{diags:?}");
}

#[test]
fn loaded_scenario_resolves_references() {
    let l = load(&fixture_path("scenario_recovery_via_C.json")).unwrap();
    assert_eq!(l.plans.len(), 2);
    assert_eq!(l.policy.interval_s, 10.0);
    assert_eq!(l.files.iter().map(|f| f.role.as_str()).collect::<Vec<_>>(), [
        "scenario", "topology", "allocation", "policy", "plan", "plan"
    ]);
    assert!(l.files.iter().all(|f| f.sha256.len() == 64));
    assert!(matches!(l.scenario.timeline[1].event, Event::SetAllocation { multipair_factor, .. } if multipair_factor > 400.0));
}

#[test]
fn default_policy_is_three_darks() {
    let l = load(&fixture_path("scenario_empty.json")).unwrap();
    assert_eq!(l.policy.threshold("A1"), Some(150.0));
    assert_eq!(l.policy.threshold("B2"), Some(30.0));
}

#[test]
fn unsorted_timeline_points_at_the_line() {
    let dir = scratch();
    let p = dir.path().join("scenario_recovery_via_B.json");
    edit(&p, r#""t": 1500"#, r#""t": 10"#);
    let d = load(&p).unwrap_err();
    assert_eq!(d.len(), 1, "{d:?}");
    assert_eq!(d[0].path, "timeline[4].t");
    assert_eq!(d[0].message, "timeline not sorted");
    assert_eq!(d[0].line, Some(13));
    assert!(d[0].to_string().contains("scenario_recovery_via_B.json:13: timeline[4].t"));
}

#[test]
fn unknown_users_are_reported_everywhere() {
    let dir = scratch();
    let sc = dir.path().join("scenario_direct_links.json");
    edit(&sc, r#""pair": ["B1", "C1"]"#, r#""pair": ["B1", "Z9"]"#);
    let plan = dir.path().join("plan_representative.json");
    edit(&plan, r#""user": "C2" }"#, r#""user": "Q7" }"#);
    let d = load(&sc).unwrap_err();
    let paths: Vec<_> = d.iter().map(|x| (x.file.file_name().unwrap().to_str().unwrap(), x.path.as_str())).collect();
    assert!(paths.contains(&("scenario_direct_links.json", "timeline[5].pair[1]")), "{d:?}");
    assert!(paths.contains(&("plan_representative.json", "assignments[5].user")), "{d:?}");
    assert!(d.iter().all(|x| x.line.is_some()));
}

#[test]
fn other_problems_are_collected() {
    let dir = scratch();
    let sc = dir.path().join("scenario_recovery_via_B.json");
    edit(&sc, r#""span": "A-C" }"#, r#""span": "A-Z" }"#);
    edit(&sc, r#""duration_s": 12 }"#, r#""duration_s": 0, "settings": ["HV", "HX"] }"#);
    edit(&sc, r#""policy": "policy_default.json""#, r#""policy": "missing.json""#);
    let msgs: Vec<String> = load(&sc).unwrap_err().iter().map(|d| d.to_string()).collect();
    let all = msgs.join("\n");
    assert!(all.contains("unknown span A-Z"), "{all}");
    assert!(all.contains("duration must be positive"), "{all}");
    assert!(all.contains("HX"), "{all}");
    assert!(all.contains("policy: cannot read"), "{all}");
}

#[test]
fn pairs_must_share_a_channel() {
    let dir = scratch();
    let sc = dir.path().join("scenario_direct_links.json");
    edit(&sc, r#""pair": ["B1", "C1"]"#, r#""pair": ["A1", "C2"]"#);
    let d = load(&sc).unwrap_err();
    assert!(d[0].message.contains("share no channel"), "{d:?}");
}

#[test]
fn standalone_files_are_checked_by_kind() {
    let dir = scratch();
    let topo = dir.path().join("ornl_paper.json");
    edit(&topo, r#""a": "WSS1.a1""#, r#""a": "WSS9.a1""#);
    let policy = dir.path().join("policy_default.json");
    edit(&policy, r#""hysteresis": 1.2"#, r#""hysteresis": 0.5"#);
    let junk = dir.path().join("junk.json");
    fs::write(&junk, "{\n  \"hello\": 1\n}\n").unwrap();
    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\n  \"timeline\": [\n}\n").unwrap();

    let d = validate_files(&[topo, policy, junk, broken.clone(), fixture_path("plan_representative.json")]);
    assert_eq!(d.len(), 4, "{d:?}");
    assert!(d[0].message.contains("WSS9"), "{d:?}");
    assert!(d[1].message.contains("hysteresis"));
    assert!(d[2].message.contains("unrecognized"));
    assert_eq!((d[3].file.clone(), d[3].line), (broken, Some(3)));
}

#[test]
fn settings_parse() {
    let s = parse_settings(&["HV".into(), "rl".into()]).unwrap();
    assert_eq!(s[0].to_string(), "HV");
    assert_eq!(s[1].to_string(), "RL");
    assert!(parse_settings(&["H".into()]).is_err());
    assert!(parse_settings(&["HVD".into()]).is_err());
}
