//! Regenerates resources/reference_prompts.jsonl, the 9,033-record alignment
//! pool used to check the analysis report against reference composition counts.

use std::io::Write;

use arena_core::prompts::{
    append_record, CandidatePools, Difficulty, LogicBucket, PromptConfig, PromptRecord, SupportBucket, Tag, Task,
    TemplateRewriter, Rewriter, TextSource,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn expand<T: Copy>(counts: &[(T, usize)]) -> Vec<T> {
    counts.iter().flat_map(|(t, n)| std::iter::repeat_n(*t, *n)).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    use Difficulty::*;
    use LogicBucket::*;
    let mut rng = ChaCha8Rng::seed_from_u64(9033);
    let pools = CandidatePools::sample();

    let structure = expand(&[
        ((Easy, AttributeBinding), 1462),
        ((Easy, StateAction), 840),
        ((Medium, AttributeBinding), 500),
        ((Medium, StateAction), 285),
        ((Medium, Counting), 760),
        ((Medium, ShortText), 745),
        ((Hard, Spatial), 749),
        ((Hard, Counting), 752),
        ((Hard, ShortText), 724),
        ((HardLongText, LongText), 2216),
    ]);
    let mut supports = expand(&[
        (SupportBucket::CameraComposition, 2224),
        (SupportBucket::Environment, 2276),
        (SupportBucket::LightingAtmosphere, 2272),
        (SupportBucket::MediumFormat, 2261),
    ]);
    let mut slots = expand(&[(4u8, 3690), (5, 5071), (6, 272)]);
    supports.shuffle(&mut rng);
    slots.shuffle(&mut rng);
    let mut order: Vec<usize> = (0..structure.len()).collect();
    order.shuffle(&mut rng);

    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("resources/reference_prompts.jsonl");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    for (id, &i) in order.iter().enumerate() {
        let (difficulty, logic) = structure[i];
        let pick = |pool: &[String], rng: &mut ChaCha8Rng| pool[rng.gen_range(0..pool.len())].clone();
        let config = PromptConfig {
            id: id as u64,
            task: Task::Alignment,
            difficulty: Some(difficulty),
            subject: pick(&pools.strong_subjects, &mut rng),
            logic: Some(Tag { bucket: logic, text: pick(pools.logic_pool(logic), &mut rng) }),
            supports: vec![Tag { bucket: supports[id], text: pick(pools.support_pool(supports[id]), &mut rng) }],
            checklist_slots: Some(slots[id]),
            rewritten_text: None,
        };
        let text = TemplateRewriter.rewrite(&config)?;
        append_record(&PromptRecord::with_text(config, text.prompt, TextSource::Template, Vec::new()), &mut out)?;
    }
    out.flush()?;
    println!("wrote {} records to {}", order.len(), path.display());
    Ok(())
}
