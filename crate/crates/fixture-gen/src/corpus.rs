//! The synthetic tariff corpus: who posted what and when, plus the labels
//! and raw topics the scripted model will return for each post.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EVENT_KEYWORDS: &str = "U.S. tariff";
pub const HASHTAG: &str = "#U.S. tariff#";
pub const TOTAL_POSTS: usize = 1572;

/// Posts in the early hours; hours 8..=23 share the remainder.
const EARLY_HOURS: [usize; 8] = [22, 8, 4, 2, 1, 0, 0, 0];
const LATE_WEIGHTS: [u32; 16] = [55, 75, 90, 100, 105, 100, 92, 95, 100, 105, 110, 118, 112, 100, 80, 50];

/// Global index of the 00:10 sample post (batch 2).
pub const SCIENCE_INDEX: usize = 12;
/// Global index of the 08:57 sample post (batch 4): first post after the 37 early ones.
pub const BENGBU_INDEX: usize = 37;
/// The one post the model labels "Mixed".
pub const MIXED_INDEX: usize = 905;

pub const POSITIVE: usize = 207;
pub const NEUTRAL: usize = 371;
/// Per-post negatives; two surplus labels bring the tally to 995.
pub const NEGATIVE: usize = 993;

pub const DISTINCT_RAW_TOPICS: usize = 361;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Pricing,
    Framework,
    China,
    Economy,
}

impl Group {
    /// Target (negative, neutral) shares in permille; positive takes the rest.
    fn shares(self) -> (usize, usize) {
        match self {
            Group::Pricing => (780, 140),
            Group::Framework => (420, 400),
            Group::China => (600, 250),
            Group::Economy => (750, 180),
        }
    }
}

pub struct Canonical {
    pub name: &'static str,
    pub count: usize,
    group: Group,
    facets: &'static [&'static str],
}

const fn c(name: &'static str, count: usize, group: Group, facets: &'static [&'static str]) -> Canonical {
    Canonical {
        name,
        count,
        group,
        facets,
    }
}

/// The 22 high-level topics, in reference order.
pub const CANONICAL: [Canonical; 22] = [
    c("Impact of US tariff on imported consumer goods for ordinary residents", 305, Group::Pricing, &[
        "Rising prices of imported electronics",
        "Higher costs of imported cosmetics and daily goods",
        "Price hikes for imported food products",
        "Consumers stockpiling imported goods",
        "Imported car prices",
    ]),
    c("Escalation of the China–US trade war and China's countermeasures", 338, Group::China, &[
        "Escalation of the China–US trade war",
        "China's retaliatory tariffs on US goods",
        "China's export controls as a countermeasure",
        "Tit-for-tat tariff escalation",
        "China's firm stance against US tariff pressure",
        "Unreliable entity list additions",
    ]),
    c("Challenges to the global multilateral trading system", 110, Group::Framework, &[
        "WTO dispute settlement paralysis",
        "Erosion of most-favored-nation principles",
        "Unilateralism versus multilateral trade rules",
        "Future of the WTO",
    ]),
    c("Ripple effects of US tariff policy on the global economy", 409, Group::Economy, &[
        "Global stock market turmoil",
        "Recession risks for the world economy",
        "Disruption of global supply chains",
        "Slower global growth forecasts",
        "Volatility in commodity prices",
        "Currency market swings",
    ]),
    c("Policy suggestions for structural adjustment of China's economy under US tariff", 98, Group::China, &[
        "Expanding domestic consumer demand",
        "Upgrading China's industrial structure",
        "Diversifying China's export markets",
        "Boosting technological self-reliance",
    ]),
    c("Support for small and medium-sized enterprises and regulation of e-commerce development", 6, Group::China, &[
        "Relief measures for small exporters",
        "Regulating cross-border e-commerce platforms",
    ]),
    c("Education policy adjustments from the perspective of cultural security", 2, Group::China, &[
        "Cultural security in education policy",
    ]),
    c("Impact of US tariff on the channels and prices of imported pet food", 1, Group::Pricing, &[]),
    c("Response of China's Ministry of Foreign Affairs to US tariff increases", 64, Group::China, &[
        "Foreign Ministry spokesperson remarks on tariffs",
        "Diplomatic protests against US tariff increases",
    ]),
    c("Disputes over international multilateral trade order under the China–US trade war", 101, Group::Framework, &[
        "Rule-based trade order under strain",
        "Disputes over trade rules between China and the US",
        "Legitimacy of unilateral tariff measures",
    ]),
    c("Impact of US tariff policy on corporate product pricing structure", 433, Group::Pricing, &[
        "Companies raising product prices",
        "Cost pass-through to consumers",
        "Profit margins of manufacturers under tariffs",
        "Supply chain cost restructuring",
        "Pricing strategies of multinational brands",
        "Apple product price increases",
    ]),
    c("Responses of major global economies to US tariff increases", 288, Group::Framework, &[
        "EU response to US tariff increases",
        "Japan's reaction to US tariffs",
        "Canada and Mexico retaliation",
        "ASEAN countries' response to tariffs",
        "India's trade talks with the US",
    ]),
    c("Economic cooperation positions of China-Japan-Korea and China-Europe in tariff disputes", 48, Group::Framework, &[
        "China-Japan-Korea free trade talks",
        "China-Europe economic cooperation amid tariffs",
        "Regional trade partnerships as a hedge",
    ]),
    c("Energy and tariff negotiations in US–EU trade disputes", 39, Group::Framework, &[
        "US–EU negotiations on energy purchases",
        "EU purchases of US liquefied natural gas",
        "Tariff exemptions in US–EU talks",
    ]),
    c("Use of energy exports by the US as a tool of trade pressure", 20, Group::Framework, &[
        "US energy exports as leverage",
        "Energy deals tied to tariff relief",
    ]),
    c("Countermeasures of the EU against US trade pressure", 60, Group::Framework, &[
        "EU retaliatory tariff lists",
        "EU anti-coercion instrument",
        "EU countermeasures on US goods",
    ]),
    c("US tariff policy may widen the wealth gap", 127, Group::Economy, &[
        "Tariffs as a regressive tax on the poor",
        "Burden of tariffs on low-income households",
        "Income inequality in the US",
    ]),
    c("US tariff increases on multiple countries", 78, Group::Framework, &[
        "Reciprocal tariffs on dozens of countries",
        "Tariff rates announced for trading partners",
        "Tariff suspension for some countries",
    ]),
    c("Impact of US tariff on reshoring of manufacturing", 47, Group::Economy, &[
        "Bringing manufacturing jobs back to the US",
        "Feasibility of US manufacturing reshoring",
    ]),
    c("Strategic and security considerations behind US tariff policy", 80, Group::Framework, &[
        "National security justification for tariffs",
        "Technology competition behind tariffs",
        "Geopolitical motives of US trade policy",
    ]),
    c("Impact of US tariff policy on imported consumer goods for ordinary residents", 167, Group::Pricing, &[
        "Cost of living for American families",
        "Prices of everyday goods in US supermarkets",
        "Imported goods becoming unaffordable",
    ]),
    c("Impact of US tariff policy on reshoring of manufacturing", 48, Group::Economy, &[
        "Reshoring incentives in US tariff policy",
        "Factory relocation decisions under US tariffs",
    ]),
];

const QUALIFIERS: [&str; 14] = [
    "in the short term",
    "for export-oriented firms",
    "after the April 9 tariff hike",
    "as seen by ordinary netizens",
    "in official statements",
    "in financial market reactions",
    "for coastal manufacturing hubs",
    "compared with the 2018 dispute",
    "in media commentary",
    "for cross-border e-commerce",
    "in expert analysis",
    "over the coming months",
    "for household budgets",
    "in stock market reactions",
];

// Canonical indices (0-based) used by the sample posts.
const C_TRADE_WAR: usize = 1;
const C_GLOBAL_ECONOMY: usize = 3;
const C_CORPORATE_PRICING: usize = 10;
const C_MAJOR_ECONOMIES: usize = 11;
const C_WEALTH_GAP: usize = 16;

#[derive(Debug, Clone)]
pub struct GenPost {
    pub hour: u32,
    pub minute: u32,
    pub user_id: String,
    pub source_device: String,
    pub reposts: u64,
    pub comments: u64,
    pub likes: u64,
    pub text: String,
    /// Label exactly as the scripted model writes it.
    pub label: String,
    pub topics: Vec<String>,
}

pub struct Corpus {
    pub posts: Vec<GenPost>,
    /// Raw topic to canonical index.
    pub raw_to_canonical: BTreeMap<String, usize>,
    /// Raw topics per canonical, in canonical order.
    pub raws: Vec<Vec<String>>,
}

pub fn hour_counts() -> [usize; 24] {
    let early: usize = EARLY_HOURS.iter().sum();
    let late_total = TOTAL_POSTS - early;
    let weight_sum: u32 = LATE_WEIGHTS.iter().sum();
    let mut counts = [0usize; 24];
    counts[..8].copy_from_slice(&EARLY_HOURS);
    let mut remainders = Vec::new();
    let mut assigned = 0;
    for (i, w) in LATE_WEIGHTS.iter().enumerate() {
        let exact = late_total * *w as usize;
        counts[8 + i] = exact / weight_sum as usize;
        assigned += counts[8 + i];
        remainders.push((exact % weight_sum as usize, i));
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, i) in remainders.into_iter().take(late_total - assigned) {
        counts[8 + i] += 1;
    }
    counts
}

/// Number of distinct raw topics per canonical: proportional to its count,
/// at least one, summing to [`DISTINCT_RAW_TOPICS`].
fn raw_allocation() -> Vec<usize> {
    let total: usize = CANONICAL.iter().map(|c| c.count).sum();
    let mut alloc: Vec<usize> = CANONICAL
        .iter()
        .map(|c| ((c.count * DISTINCT_RAW_TOPICS + total / 2) / total).clamp(1, c.count))
        .collect();
    let mut order: Vec<usize> = (0..CANONICAL.len()).collect();
    order.sort_by(|a, b| CANONICAL[*b].count.cmp(&CANONICAL[*a].count));
    let mut i = 0;
    while alloc.iter().sum::<usize>() != DISTINCT_RAW_TOPICS {
        let c = order[i % order.len()];
        if alloc.iter().sum::<usize>() < DISTINCT_RAW_TOPICS {
            if alloc[c] < CANONICAL[c].count {
                alloc[c] += 1;
            }
        } else if alloc[c] > 1 {
            alloc[c] -= 1;
        }
        i += 1;
    }
    alloc
}

fn raw_topics() -> Vec<Vec<String>> {
    raw_allocation()
        .into_iter()
        .zip(CANONICAL.iter())
        .map(|(n, canon)| {
            let mut pool: Vec<String> = vec![canon.name.to_string()];
            pool.extend(canon.facets.iter().map(|f| f.to_string()));
            for q in QUALIFIERS {
                pool.extend(canon.facets.iter().map(|f| format!("{f} {q}")));
            }
            for q in QUALIFIERS {
                pool.push(format!("{} {q}", canon.name));
            }
            assert!(pool.len() >= n, "not enough raw topic variants for {}", canon.name);
            pool.truncate(n);
            pool
        })
        .collect()
}

fn minutes(rng: &mut ChaCha8Rng, hour: usize, n: usize) -> Vec<u32> {
    let mut m: Vec<u32> = match hour {
        0 => {
            let mut v: Vec<u32> = (0..12).map(|_| rng.gen_range(11..60)).collect();
            v.push(10);
            v.extend((0..n - 13).map(|_| rng.gen_range(0..10)));
            v
        }
        8 => {
            let mut v: Vec<u32> = (0..n - 1).map(|_| rng.gen_range(0..57)).collect();
            v.push(57);
            v
        }
        _ => (0..n).map(|_| rng.gen_range(0..60)).collect(),
    };
    m.sort_unstable_by(|a, b| b.cmp(a));
    m
}

fn labels(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut pool: Vec<&str> = Vec::with_capacity(TOTAL_POSTS);
    pool.extend(std::iter::repeat("positive").take(POSITIVE));
    pool.extend(std::iter::repeat("neutral").take(NEUTRAL));
    pool.extend(std::iter::repeat("negative").take(NEGATIVE - 2));
    pool.shuffle(rng);
    let mut pool = pool.into_iter();
    (0..TOTAL_POSTS)
        .map(|i| match i {
            SCIENCE_INDEX | BENGBU_INDEX => "negative".to_string(),
            MIXED_INDEX => "Mixed".to_string(),
            _ => pool.next().expect("label pool sized to the corpus").to_string(),
        })
        .collect()
}

/// Per-post topic-count vector for one sentiment group summing to `total`.
fn topic_counts(rng: &mut ChaCha8Rng, posts: usize, untagged: usize, total: usize) -> Vec<usize> {
    let tagged = posts - untagged;
    assert!(total >= tagged && total <= tagged * 4, "infeasible topic total {total} for {tagged} posts");
    let mut k = vec![1usize; tagged];
    let mut extra = total - tagged;
    while extra > 0 {
        let i = rng.gen_range(0..tagged);
        if k[i] < 4 {
            k[i] += 1;
            extra -= 1;
        }
    }
    k.extend(std::iter::repeat(0).take(untagged));
    k
}

/// Gives each post a set of distinct canonical topics so that canonical
/// totals match `remaining` exactly: rows by decreasing degree, each taking
/// the columns with the largest residual degree.
fn realize(rng: &mut ChaCha8Rng, degrees: &[usize], remaining: &mut [usize]) -> Vec<Vec<usize>> {
    let tiebreak: Vec<u32> = (0..remaining.len()).map(|_| rng.gen()).collect();
    let mut order: Vec<usize> = (0..degrees.len()).collect();
    order.sort_by(|a, b| degrees[*b].cmp(&degrees[*a]));
    let mut sets = vec![Vec::new(); degrees.len()];
    for row in order {
        let mut cols: Vec<usize> = (0..remaining.len()).filter(|c| remaining[*c] > 0).collect();
        cols.sort_by(|a, b| remaining[*b].cmp(&remaining[*a]).then(tiebreak[*a].cmp(&tiebreak[*b])));
        assert!(cols.len() >= degrees[row], "topic assignment is not realizable");
        for &c in &cols[..degrees[row]] {
            remaining[c] -= 1;
            sets[row].push(c);
        }
    }
    assert!(remaining.iter().all(|r| *r == 0), "topic slots left over");
    sets.shuffle(rng);
    sets
}

fn canonical_sets(rng: &mut ChaCha8Rng, labels: &[String]) -> Vec<Vec<usize>> {
    let mut target: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, canon) in CANONICAL.iter().enumerate() {
        let (neg, neu) = canon.group.shares();
        let n = (canon.count * neg + 500) / 1000;
        let u = (canon.count * neu + 500) / 1000;
        target.entry("negative").or_insert_with(|| vec![0; 22])[i] = n;
        target.entry("neutral").or_insert_with(|| vec![0; 22])[i] = u;
        target.entry("positive").or_insert_with(|| vec![0; 22])[i] = canon.count - n - u;
    }
    let fixed: [(usize, &str, [usize; 2]); 3] = [
        (SCIENCE_INDEX, "negative", [C_TRADE_WAR, C_MAJOR_ECONOMIES]),
        (BENGBU_INDEX, "negative", [C_CORPORATE_PRICING, C_WEALTH_GAP]),
        (MIXED_INDEX, "neutral", [C_GLOBAL_ECONOMY, C_MAJOR_ECONOMIES]),
    ];
    let mut sets = vec![Vec::new(); labels.len()];
    for (idx, pool, cols) in fixed {
        for c in cols {
            target.get_mut(pool).unwrap()[c] -= 1;
        }
        sets[idx] = cols.to_vec();
    }
    for (label, untagged) in [("negative", 25), ("neutral", 20), ("positive", 8)] {
        let members: Vec<usize> = (0..labels.len())
            .filter(|i| labels[*i] == label && ![SCIENCE_INDEX, BENGBU_INDEX, MIXED_INDEX].contains(i))
            .collect();
        let remaining = target.get_mut(label).unwrap();
        let total = remaining.iter().sum();
        let degrees = topic_counts(rng, members.len(), untagged, total);
        for (post, set) in members.into_iter().zip(realize(rng, &degrees, remaining)) {
            sets[post] = set;
        }
    }
    sets
}

/// Picks a raw topic for every (post, canonical) slot: each raw topic is
/// used at least once and popular variants recur.
fn assign_raws(rng: &mut ChaCha8Rng, sets: &[Vec<usize>], raws: &[Vec<String>]) -> Vec<Vec<String>> {
    let mut topics: Vec<Vec<Option<String>>> = sets.iter().map(|s| vec![None; s.len()]).collect();
    let fixed = [
        (SCIENCE_INDEX, ["Escalation of the China–US trade war", CANONICAL[C_MAJOR_ECONOMIES].name]),
        (BENGBU_INDEX, [CANONICAL[C_CORPORATE_PRICING].name, CANONICAL[C_WEALTH_GAP].name]),
    ];
    let mut used: BTreeSet<&str> = BTreeSet::new();
    for (post, names) in fixed {
        for (slot, name) in names.iter().enumerate() {
            topics[post][slot] = Some(name.to_string());
            used.insert(name);
        }
    }
    for (c, variants) in raws.iter().enumerate() {
        let mut slots: Vec<(usize, usize)> = sets
            .iter()
            .enumerate()
            .flat_map(|(p, s)| s.iter().enumerate().filter(|(_, x)| **x == c).map(move |(j, _)| (p, j)))
            .filter(|(p, j)| topics[*p][*j].is_none())
            .collect();
        slots.shuffle(rng);
        let must: Vec<&String> = variants.iter().filter(|v| !used.contains(v.as_str())).collect();
        assert!(slots.len() >= must.len(), "too few slots for the raw topics of {}", CANONICAL[c].name);
        let weights: Vec<f64> = (0..variants.len()).map(|r| 1.0 / (r as f64 + 1.0)).collect();
        let weight_sum: f64 = weights.iter().sum();
        for (n, (p, j)) in slots.into_iter().enumerate() {
            let raw = match must.get(n) {
                Some(v) => (*v).clone(),
                None => {
                    let mut x = rng.gen::<f64>() * weight_sum;
                    let mut pick = variants.len() - 1;
                    for (r, w) in weights.iter().enumerate() {
                        if x < *w {
                            pick = r;
                            break;
                        }
                        x -= w;
                    }
                    variants[pick].clone()
                }
            };
            topics[p][j] = Some(raw);
        }
    }
    topics
        .into_iter()
        .enumerate()
        .map(|(p, t)| {
            let mut t: Vec<String> = t.into_iter().map(|x| x.expect("every slot assigned")).collect();
            if p != SCIENCE_INDEX && p != BENGBU_INDEX {
                t.shuffle(rng);
            }
            t
        })
        .collect()
}

const ADJECTIVES: [&str; 24] = [
    "Quiet", "Curious", "Sunny", "Old", "Lazy", "Brave", "Little", "Blue", "Morning", "Northern",
    "Busy", "Calm", "Happy", "Wandering", "Silver", "Late-night", "Rainy", "Honest", "Southern",
    "Clever", "Green", "Lucky", "Sleepy", "Humble",
];
const NOUNS: [&str; 24] = [
    "River", "Observer", "Panda", "Reader", "Cat", "Trader", "Teacher", "Engineer", "Walker",
    "Bamboo", "Student", "Fisherman", "Cloud", "Accountant", "Lantern", "Farmer", "Commuter",
    "Economist", "Sparrow", "Mountain", "Merchant", "Editor", "Runner", "Tea Lover",
];
const MEDIA: [&str; 12] = [
    "Economic Observer Daily", "Global Finance Watch", "Coastal Evening News", "Market Morning Brief",
    "City Business Radio", "Trade Frontline", "Financial Pulse", "People's Economy Review",
    "Port City Daily", "Industry Weekly", "Capital Market Herald", "Evening Commentary",
];
const DEVICES: [&str; 12] = [
    "iPhone 15 Pro", "iPhone 14", "HUAWEI Mate 60 Pro", "HUAWEI P60", "Xiaomi 14", "Redmi K70",
    "OPPO Find X7", "vivo X100", "Honor Magic6", "Weibo web", "iPad Air", "Weibo Video Account",
];

fn user_id(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..10) {
        0 => MEDIA[rng.gen_range(0..MEDIA.len())].to_string(),
        1..=5 => format!(
            "{} {}",
            ADJECTIVES[rng.gen_range(0..ADJECTIVES.len())],
            NOUNS[rng.gen_range(0..NOUNS.len())]
        ),
        _ => format!(
            "{}{}_{}",
            ADJECTIVES[rng.gen_range(0..ADJECTIVES.len())],
            NOUNS[rng.gen_range(0..NOUNS.len())].replace(' ', ""),
            rng.gen_range(10..10_000)
        ),
    }
}

fn engagement(rng: &mut ChaCha8Rng) -> u64 {
    match rng.gen_range(0..20) {
        0..=7 => 0,
        8..=15 => rng.gen_range(1..20),
        16..=18 => rng.gen_range(20..500),
        _ => rng.gen_range(500..30_000),
    }
}

fn phrase(topic: &str) -> String {
    let mut chars = topic.chars();
    match (chars.next(), chars.next()) {
        (Some(a), Some(b)) if a.is_uppercase() && b.is_lowercase() => {
            a.to_lowercase().chain(topic.chars().skip(1)).collect()
        }
        _ => topic.to_string(),
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

fn compose(rng: &mut ChaCha8Rng, label: &str, topics: &[String]) -> String {
    let (openers, closers): (&[&str], &[&str]) = match label {
        "negative" => (
            &["Really worried about", "Not good at all:", "Another blow:", "Angry about", "Hard to stay calm about", "Who pays for this?"],
            &["Ordinary people pay the price.", "This will hurt everyone.", "Where does this end?", "Bad for all of us.", "Tough times ahead."],
        ),
        "positive" => (
            &["Encouraging to see", "Confident about", "Good move on", "Fully support the response on", "Proud of how we handle"],
            &["We will get through this.", "Stay confident!", "Resilience matters.", "Well handled.", "Our economy can take it."],
        ),
        _ => (
            &["Update on", "Reported today:", "Analysts discuss", "Quick summary of", "News:", "Reading about"],
            &["More details to follow.", "Let's see what happens next.", "Source: financial news.", "Worth following.", ""],
        ),
    };
    let body = if topics.is_empty() {
        let generic = pick(
            rng,
            &["Just saw the news.", "Reposting for visibility.", "Saving this for later.", "What does everyone think?", "Following this closely.", "[doge]"],
        );
        format!("{generic} {}", pick(rng, closers)).trim_end().to_string()
    } else if label.eq_ignore_ascii_case("mixed") {
        let second = topics.get(1).unwrap_or(&topics[0]);
        format!(
            "Mixed feelings here. {} worries me, but {} gives some hope.",
            topics[0],
            phrase(second)
        )
    } else {
        let mut s = format!("{} {}.", pick(rng, openers), phrase(&topics[0]));
        for t in &topics[1..] {
            s.push_str(&format!(" {} {}.", pick(rng, &["Also:", "And", "Plus", "Not to mention"]), phrase(t)));
        }
        let closer = pick(rng, closers);
        if !closer.is_empty() {
            s.push(' ');
            s.push_str(closer);
        }
        s
    };
    match rng.gen_range(0..10) {
        0..=5 => format!("{HASHTAG} {body}"),
        6..=7 => format!("{body} {HASHTAG}"),
        _ => format!("{HASHTAG}{body} #Trade War#"),
    }
}

pub fn build(rng: &mut ChaCha8Rng) -> Corpus {
    let counts = hour_counts();
    let mut skeleton: Vec<(u32, u32)> = Vec::with_capacity(TOTAL_POSTS);
    for (hour, &n) in counts.iter().enumerate() {
        for m in minutes(rng, hour, n) {
            skeleton.push((hour as u32, m));
        }
    }
    assert_eq!(skeleton.len(), TOTAL_POSTS);
    assert_eq!(skeleton[SCIENCE_INDEX], (0, 10));
    assert_eq!(skeleton[BENGBU_INDEX], (8, 57));

    let labels = labels(rng);
    let raws = raw_topics();
    let sets = canonical_sets(rng, &labels);
    let topics = assign_raws(rng, &sets, &raws);

    let posts = skeleton
        .into_iter()
        .zip(labels)
        .zip(topics)
        .enumerate()
        .map(|(i, (((hour, minute), label), topics))| match i {
            SCIENCE_INDEX => GenPost {
                hour,
                minute,
                user_id: "Science Future Person".into(),
                source_device: "Frank's Android".into(),
                reposts: 6,
                comments: 1,
                likes: 6,
                text: format!(
                    "#Who is hurt by the U.S. tariff policy# A senior official from Trump's administration \
                     admitted the new duties will raise costs at home, while Beijing vowed to respond in kind. {HASHTAG}"
                ),
                label,
                topics,
            },
            BENGBU_INDEX => GenPost {
                hour,
                minute,
                user_id: "Bengbu Daily".into(),
                source_device: "Weibo Video Account".into(),
                reposts: 0,
                comments: 1,
                likes: 1,
                text: format!(
                    "#Tariff Policy Sparks Widespread Concern Across the U.S.# The U.S. has announced \
                     sweeping new import duties; retailers warn shelf prices will climb and low-income families \
                     will feel it first. {HASHTAG}"
                ),
                label,
                topics,
            },
            _ => GenPost {
                hour,
                minute,
                user_id: user_id(rng),
                source_device: DEVICES[rng.gen_range(0..DEVICES.len())].to_string(),
                reposts: engagement(rng),
                comments: engagement(rng),
                likes: engagement(rng),
                text: compose(rng, &label, &topics),
                label,
                topics,
            },
        })
        .collect();

    let raw_to_canonical = raws
        .iter()
        .enumerate()
        .flat_map(|(c, vs)| vs.iter().map(move |v| (v.clone(), c)))
        .collect();
    Corpus {
        posts,
        raw_to_canonical,
        raws,
    }
}
