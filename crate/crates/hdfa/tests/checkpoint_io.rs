use hdfa::checkpoint::{load_bank, save_bank, Checkpoint, FORMAT_VERSION};
use hdfa_core::estimator::{BankConfig, EstimatorBank};

fn bank() -> EstimatorBank {
    EstimatorBank::new(
        3,
        &BankConfig {
            hidden: 5,
            steps: 4,
            c0: -0.3,
            ..BankConfig::default()
        },
        11,
    )
    .unwrap()
}

#[test]
fn bank_round_trips_exactly() {
    let b = bank();
    let ck = Checkpoint::from_bank(&b);
    assert_eq!(ck.format_version, FORMAT_VERSION);
    assert_eq!(ck.networks.len(), 6);
    assert_eq!(ck.networks[0].name, "F1");
    assert!(ck.networks[0].f2.is_none() && ck.networks[1].f2.is_some());
    let back = Checkpoint::from_json(&ck.to_json()).unwrap().to_bank().unwrap();
    assert_eq!(back, b);
    assert_eq!(Checkpoint::from_bank(&back).to_json(), ck.to_json());
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bank.json");
    save_bank(&bank(), &p).unwrap();
    assert_eq!(load_bank(&p).unwrap(), bank());
}

#[test]
fn bad_checkpoints_are_rejected() {
    let mut ck = Checkpoint::from_bank(&bank());
    ck.format_version = 99;
    assert!(ck.to_bank().is_err());
    let mut ck = Checkpoint::from_bank(&bank());
    ck.networks.swap(0, 1);
    assert!(ck.to_bank().is_err());
    let mut ck = Checkpoint::from_bank(&bank());
    ck.networks[2].f1.weight.pop();
    assert!(ck.to_bank().is_err());
    let mut ck = Checkpoint::from_bank(&bank());
    ck.c0 = 0.5;
    assert!(ck.to_bank().is_err());
    assert!(Checkpoint::from_json("{").is_err());
}
