use std::collections::BTreeSet;

use hoi_core::dataset::{
    generate_corpus, read_records, split_dataset, to_instruction, validate_record, write_records, CorpusConfig, Describer, Split, Task,
};
use hoi_core::kinematics::{AssetLibrary, SkeletonTemplate};

#[test]
fn generate_split_persist_and_format() {
    let cfg = CorpusConfig {
        pairs: 150,
        seed: 12,
        ..CorpusConfig::default()
    };
    let recs = generate_corpus(&cfg, &SkeletonTemplate::default(), &AssetLibrary::standard(), &Describer::standard()).unwrap();
    assert_eq!(recs.len(), 150);
    let (recs, _) = split_dataset(recs, 0.7, 3).unwrap();

    let seqs = |split: Split| -> BTreeSet<String> {
        recs.iter().filter(|r| r.split == Some(split)).map(|r| r.sequence_id.clone()).collect()
    };
    let (train, test) = (seqs(Split::Train), seqs(Split::Test));
    assert!(!train.is_empty() && !test.is_empty());
    assert!(train.is_disjoint(&test));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.jsonl");
    write_records(&path, &recs).unwrap();
    let back = read_records(&path).unwrap();
    assert_eq!(back, recs);
    for r in &back {
        assert!(validate_record(r).is_ok(), "{}", r.id);
        for task in Task::ALL {
            to_instruction(r, task).validate().unwrap();
        }
    }
}
