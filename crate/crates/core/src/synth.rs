//! Deterministic synthetic knowledge base and dialogues in the DSTC9 layout.
//!
//! Knowledge-seeking turns paraphrase a snippet question using its topic
//! keywords, and API turns draw on a disjoint vocabulary, so the corpus is
//! lexically separable. It exists to exercise the pipeline end to end, not to
//! stand in for real data.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue::{Dialogue, LabeledCorpus, Turn, TurnLabel};
use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, Snippet, SnippetRef, DOMAIN_LEVEL_ENTITY};

struct Topic {
    question: &'static str,
    /// `{name}` is replaced by the entity name; one is picked per entity.
    answers: [&'static str; 2],
    /// `{it}` is replaced by a reference to the entity.
    asks: [&'static str; 3],
}

const fn t(question: &'static str, answers: [&'static str; 2], asks: [&'static str; 3]) -> Topic {
    Topic { question, answers, asks }
}

const HOTEL: [Topic; 20] = [
    t("Is there a gym on site?", ["Yes, {name} has a gym open from 6am to 10pm.", "No, {name} does not have a gym."],
      ["Is there a gym at {it}?", "Does {it} have a gym I could use?", "Can guests use a gym at {it}?"]),
    t("Are pets allowed at the hotel?", ["Pets are welcome at {name}.", "Sorry, {name} does not allow pets."],
      ["Are pets allowed at {it}?", "Can my pets stay with me at {it}?", "Does {it} accept pets?"]),
    t("Is parking available?", ["Free parking is available at {name}.", "{name} offers paid parking nearby."],
      ["Is parking available at {it}?", "Where would I find parking at {it}?", "Does {it} have parking for my car?"]),
    t("Do rooms have wifi?", ["All rooms at {name} have free wifi.", "Wifi at {name} is available in the lobby only."],
      ["Do the rooms at {it} have wifi?", "Is there wifi in my room at {it}?", "Will I get wifi at {it}?"]),
    t("Is breakfast included in the price?", ["Breakfast is included at {name}.", "Breakfast costs extra at {name}."],
      ["Is breakfast included at {it}?", "Does the price at {it} include breakfast?", "Do I get breakfast at {it}?"]),
    t("Does the hotel have a swimming pool?", ["{name} has an indoor swimming pool.", "There is no swimming pool at {name}."],
      ["Is there a swimming pool at {it}?", "Can I go swimming in a pool at {it}?", "Does {it} have a pool for swimming?"]),
    t("What time is check-in?", ["Check-in at {name} starts at 2pm.", "Check-in at {name} starts at 3pm."],
      ["What time is check-in at {it}?", "When can I check in at {it}?", "How early is check-in at {it}?"]),
    t("What time is checkout?", ["Checkout at {name} is at 11am.", "Checkout at {name} is at noon."],
      ["What time is checkout at {it}?", "When is checkout at {it}?", "How late is checkout at {it}?"]),
    t("Is there an airport shuttle?", ["{name} runs a free airport shuttle.", "{name} has no airport shuttle."],
      ["Is there an airport shuttle from {it}?", "Does {it} run a shuttle to the airport?", "Can I take a shuttle from the airport to {it}?"]),
    t("Is smoking allowed in the rooms?", ["Smoking is not allowed anywhere in {name}.", "{name} has a few smoking rooms."],
      ["Is smoking allowed at {it}?", "Are smoking rooms available at {it}?", "Does {it} have smoking rooms?"]),
    t("Is there a laundry service?", ["{name} offers same day laundry service.", "{name} has a self service laundry."],
      ["Is there a laundry service at {it}?", "Can I get my laundry done at {it}?", "Does {it} do laundry?"]),
    t("Are there wheelchair accessible rooms?", ["{name} has wheelchair accessible rooms.", "{name} has two wheelchair accessible rooms."],
      ["Are there wheelchair accessible rooms at {it}?", "Does {it} have wheelchair accessible rooms?", "Can I get a wheelchair accessible room at {it}?"]),
    t("Can I store my luggage there?", ["{name} will store luggage for free.", "Luggage storage at {name} costs 5 pounds."],
      ["Can I store my luggage at {it}?", "Will {it} keep my luggage for a few hours?", "Is there luggage storage at {it}?"]),
    t("Is room service available?", ["Room service at {name} runs until midnight.", "{name} does not offer room service."],
      ["Is room service available at {it}?", "Can I order room service at {it}?", "Does {it} have room service?"]),
    t("Do the rooms have air conditioning?", ["Every room at {name} has air conditioning.", "{name} rooms have fans but no air conditioning."],
      ["Do rooms at {it} have air conditioning?", "Is there air conditioning at {it}?", "Will my room at {it} have air conditioning?"]),
    t("Can I get a cot for my baby?", ["{name} provides a cot on request.", "Cots at {name} cost 10 pounds per night."],
      ["Can I get a cot for my baby at {it}?", "Does {it} have a baby cot?", "Is a cot available for my baby at {it}?"]),
    t("Is there a safe in the room?", ["Each room at {name} has a safe.", "{name} keeps a safe at reception."],
      ["Is there a safe at {it}?", "Can I lock valuables in a safe at {it}?", "Does {it} have a safe for valuables?"]),
    t("Does the hotel have a spa?", ["{name} has a spa with a sauna.", "There is no spa at {name}."],
      ["Is there a spa at {it}?", "Does {it} have a spa?", "Can I book a spa treatment at {it}?"]),
    t("Can I rent a bicycle from the hotel?", ["{name} rents bicycles for 8 pounds a day.", "{name} does not rent bicycles."],
      ["Can I rent a bicycle at {it}?", "Does {it} have a bicycle to rent?", "Is bicycle rental offered at {it}?"]),
    t("Is currency exchange offered?", ["{name} offers currency exchange at reception.", "{name} does not offer currency exchange."],
      ["Is currency exchange offered at {it}?", "Can I exchange currency at {it}?", "Does {it} do currency exchange?"]),
];

const RESTAURANT: [Topic; 20] = [
    t("Are there vegetarian options on the menu?", ["{name} has several vegetarian dishes.", "{name} has one vegetarian option."],
      ["Are there vegetarian options at {it}?", "Does {it} have vegetarian food?", "Can a vegetarian eat well at {it}?"]),
    t("Do they serve gluten free dishes?", ["{name} marks its gluten free dishes.", "{name} cannot guarantee gluten free food."],
      ["Does {it} serve gluten free dishes?", "Is there gluten free food at {it}?", "Can I eat gluten free at {it}?"]),
    t("Do I need a reservation?", ["Reservations are recommended at {name}.", "{name} does not take reservations."],
      ["Do I need a reservation at {it}?", "Should I make a reservation for {it}?", "Does {it} require a reservation?"]),
    t("Is there outdoor seating?", ["{name} has a garden with outdoor seating.", "{name} has no outdoor seating."],
      ["Is there outdoor seating at {it}?", "Can we get outdoor seating at {it}?", "Does {it} have outdoor seating?"]),
    t("Is there a dress code?", ["{name} has a smart casual dress code.", "There is no dress code at {name}."],
      ["Is there a dress code at {it}?", "What is the dress code for {it}?", "Does {it} have a dress code?"]),
    t("Is there a kids menu?", ["{name} has a kids menu.", "{name} has no kids menu but offers half portions."],
      ["Is there a kids menu at {it}?", "Does {it} have a menu for kids?", "Can my kids order from a kids menu at {it}?"]),
    t("Can I order takeaway?", ["{name} offers takeaway on all dishes.", "{name} does not do takeaway."],
      ["Can I order takeaway from {it}?", "Does {it} do takeaway?", "Is takeaway available at {it}?"]),
    t("Do they offer delivery?", ["{name} delivers within three miles.", "{name} does not offer delivery."],
      ["Does {it} offer delivery?", "Can I get delivery from {it}?", "Is delivery offered by {it}?"]),
    t("Do they serve wine and beer?", ["{name} serves wine and beer.", "{name} does not serve alcohol."],
      ["Does {it} serve wine and beer?", "Can I get a beer at {it}?", "Is there wine at {it}?"]),
    t("Is there free wifi for diners?", ["Diners at {name} get free wifi.", "{name} has no wifi."],
      ["Is there wifi for diners at {it}?", "Does {it} have free wifi?", "Can I use wifi at {it}?"]),
    t("Is there a car park nearby?", ["There is a car park next to {name}.", "The nearest car park to {name} is a short walk away."],
      ["Is there a car park near {it}?", "Where is the nearest car park to {it}?", "Can I leave my car in a car park by {it}?"]),
    t("Are dogs allowed inside?", ["Dogs are allowed inside {name}.", "Only guide dogs are allowed inside {name}."],
      ["Are dogs allowed inside {it}?", "Can I bring my dog into {it}?", "Does {it} let dogs in?"]),
    t("Is there live music?", ["{name} has live music on Fridays.", "There is no live music at {name}."],
      ["Is there live music at {it}?", "Does {it} have live music?", "Will there be live music at {it} tonight?"]),
    t("Is the restaurant wheelchair accessible?", ["{name} is fully wheelchair accessible.", "{name} has a step at the entrance but a ramp is available."],
      ["Is {it} wheelchair accessible?", "Can a wheelchair get into {it}?", "Is there wheelchair access at {it}?"]),
    t("Do they accept credit cards?", ["{name} accepts all major credit cards.", "{name} accepts cash only."],
      ["Does {it} accept credit cards?", "Can I pay by credit card at {it}?", "Will {it} take my credit card?"]),
    t("Is there a corkage fee?", ["The corkage fee at {name} is 10 pounds.", "{name} charges no corkage fee."],
      ["What is the corkage fee at {it}?", "Does {it} charge a corkage fee?", "Is there a corkage fee at {it}?"]),
    t("Is there a private dining room for parties?", ["{name} has a private dining room for up to 20 guests.", "{name} has no private dining room."],
      ["Is there a private dining room at {it}?", "Can we book a private room for a party at {it}?", "Does {it} have private dining for parties?"]),
    t("Do they have high chairs for toddlers?", ["{name} has high chairs for toddlers.", "{name} has two high chairs."],
      ["Does {it} have high chairs?", "Is there a high chair for my toddler at {it}?", "Can I get a high chair at {it}?"]),
    t("Is the meat halal?", ["All meat at {name} is halal.", "The meat at {name} is not halal."],
      ["Is the meat at {it} halal?", "Does {it} serve halal meat?", "Is {it} halal?"]),
    t("Is there a happy hour?", ["{name} has a happy hour from 5pm to 7pm.", "{name} has no happy hour."],
      ["Is there a happy hour at {it}?", "When is happy hour at {it}?", "Does {it} do a happy hour?"]),
];

const ATTRACTION: [Topic; 20] = [
    t("Is there an entrance fee?", ["Entrance to {name} costs 6 pounds.", "There is no entrance fee at {name}."],
      ["Is there an entrance fee at {it}?", "How much is the entrance fee for {it}?", "Do I pay an entrance fee at {it}?"]),
    t("What are the opening hours?", ["{name} is open from 10am to 5pm.", "{name} is open from 9am to 6pm."],
      ["What are the opening hours of {it}?", "What are the opening times at {it}?", "What hours is {it} open?"]),
    t("Are guided tours available?", ["{name} runs guided tours every hour.", "{name} offers guided tours at weekends."],
      ["Are guided tours available at {it}?", "Can we join a guided tour of {it}?", "Does {it} offer guided tours?"]),
    t("Is photography allowed inside?", ["Photography without flash is allowed at {name}.", "Photography is not allowed inside {name}."],
      ["Is photography allowed at {it}?", "Is photography allowed inside {it}?", "Does {it} allow photography?"]),
    t("Is there a cafe on site?", ["{name} has a cafe near the entrance.", "There is no cafe at {name}."],
      ["Is there a cafe at {it}?", "Can I get coffee at a cafe in {it}?", "Does {it} have a cafe?"]),
    t("Is there a gift shop?", ["{name} has a gift shop.", "{name} does not have a gift shop."],
      ["Is there a gift shop at {it}?", "Can I buy souvenirs in a gift shop at {it}?", "Does {it} have a gift shop?"]),
    t("Is it wheelchair accessible?", ["{name} is wheelchair accessible throughout.", "Only the ground floor of {name} is wheelchair accessible."],
      ["Is {it} wheelchair accessible?", "Is the inside of {it} wheelchair accessible?", "Is there wheelchair access at {it}?"]),
    t("Is there parking for visitors?", ["{name} has free visitor parking.", "{name} has no visitor parking."],
      ["Is there visitor parking at {it}?", "Can visitors find parking at {it}?", "Does {it} have parking?"]),
    t("Can I bring my dog?", ["Dogs on a lead are welcome at {name}.", "Dogs are not allowed at {name}."],
      ["Can I bring my dog to {it}?", "Is my dog allowed at {it}?", "Can I bring a dog to {it}?"]),
    t("Is an audio guide available?", ["{name} lends audio guides for free.", "Audio guides at {name} cost 3 pounds."],
      ["Is an audio guide available at {it}?", "Can I get an audio guide for {it}?", "Does {it} have an audio guide?"]),
    t("Is there a student discount?", ["Students get half price entry at {name}.", "{name} offers no student discount."],
      ["Is there a student discount at {it}?", "Do students get a discount at {it}?", "Does {it} offer a student discount?"]),
    t("Are there lockers for bags?", ["{name} has free lockers for bags.", "{name} has no lockers."],
      ["Are there lockers at {it}?", "Can I leave my bags in lockers at {it}?", "Does {it} have lockers for bags?"]),
    t("Are there public toilets?", ["{name} has public toilets by the entrance.", "The nearest toilets to {name} are in the town square."],
      ["Are there toilets at {it}?", "Where are the toilets at {it}?", "Does {it} have public toilets?"]),
    t("Can we have a picnic on the grounds?", ["Picnics are welcome on the grounds of {name}.", "Picnics are not permitted at {name}."],
      ["Can we have a picnic at {it}?", "Is a picnic allowed on the grounds of {it}?", "Does {it} allow picnics?"]),
    t("Do large groups need to book ahead?", ["Groups of ten or more must book ahead at {name}.", "{name} does not require groups to book."],
      ["Do large groups need to book ahead at {it}?", "Should our group book ahead for {it}?", "Does {it} need groups to book in advance?"]),
    t("Is it suitable for young children?", ["{name} has activities for young children.", "{name} is better suited to older children."],
      ["Is {it} suitable for young children?", "Would young children enjoy {it}?", "Is {it} good for children?"]),
    t("Is wifi available for visitors?", ["{name} offers free wifi to visitors.", "There is no visitor wifi at {name}."],
      ["Is wifi available at {it}?", "Can visitors use wifi at {it}?", "Does {it} have wifi?"]),
    t("Can I bring a pushchair?", ["Pushchairs are welcome at {name}.", "Pushchairs must be left at the entrance of {name}."],
      ["Can I bring a pushchair into {it}?", "Are pushchairs allowed at {it}?", "Is {it} easy to visit with a pushchair?"]),
    t("Do they sell an annual membership pass?", ["{name} sells an annual membership pass for 30 pounds.", "{name} has no annual membership."],
      ["Does {it} sell an annual membership pass?", "Can I buy an annual pass for {it}?", "Is there an annual membership at {it}?"]),
    t("How long does a typical visit take?", ["A typical visit to {name} takes about two hours.", "Most visitors spend an hour at {name}."],
      ["How long does a typical visit to {it} take?", "How much time should I allow for a visit to {it}?", "How long do visitors usually spend at {it}?"]),
];

const TRAIN: [Topic; 12] = [
    t("How much luggage can I take on the train?", ["You can take two large suitcases and one small bag on the train.", "There is no luggage limit on the train."],
      ["How much luggage can I take on the train?", "How much luggage is allowed on the train?", "Can I take a lot of luggage on the train?"]),
    t("Can I bring my bicycle on the train?", ["Bicycles travel free on the train but space is limited.", ""],
      ["Can I bring my bicycle on the train?", "Is there space for a bicycle on the train?", "Are bicycles allowed on the train?"]),
    t("Are pets allowed on the train?", ["Up to two pets per passenger travel free on the train.", ""],
      ["Are pets allowed on the train?", "Can pets travel on the train?", "Can I take pets on the train?"]),
    t("Is food served on board?", ["A trolley serves food and drinks on board.", ""],
      ["Is food served on board the train?", "Can I buy food on board?", "Will there be food on board?"]),
    t("Is there wifi on the train?", ["Free wifi is available on the train.", ""],
      ["Is there wifi on the train?", "Will I have wifi on the train?", "Does the train have wifi?"]),
    t("Can I get a refund on my ticket?", ["Unused tickets can be refunded for a 10 pound fee.", ""],
      ["Can I get a refund on my train ticket?", "Is my ticket refundable if I cancel?", "How do I get a refund on the ticket?"]),
    t("Can I reserve a seat?", ["Seat reservations are free when you book.", ""],
      ["Can I reserve a seat on the train?", "Is it possible to reserve a seat?", "Do I need to reserve a seat?"]),
    t("Is there a first class carriage?", ["The train has a first class carriage at the front.", ""],
      ["Is there a first class carriage on the train?", "Can I upgrade to first class?", "Does the train have first class?"]),
    t("Are there power sockets at the seats?", ["Every seat on the train has a power socket.", ""],
      ["Are there power sockets on the train?", "Can I charge my laptop at a power socket on the train?", "Will my seat have a power socket?"]),
    t("Is there a quiet coach?", ["Coach C is the quiet coach on this train.", ""],
      ["Is there a quiet coach on the train?", "Can I sit in a quiet coach?", "Does the train have a quiet coach?"]),
    t("Can I get a discount with a railcard?", ["A railcard gives a third off the ticket price.", ""],
      ["Can I get a discount with a railcard on the train?", "Can I use my railcard for a discount?", "Is there a discount with a railcard?"]),
    t("Is wheelchair assistance available at the station?", ["Station staff provide wheelchair assistance if you book a day ahead.", ""],
      ["Is wheelchair assistance available for the train?", "Can I get wheelchair assistance at the station?", "Do they offer wheelchair assistance when boarding the train?"]),
];

const TAXI: [Topic; 5] = [
    t("Can I pay for the taxi by card?", ["All our taxis accept card payments.", ""],
      ["Can I pay for the taxi by card?", "Does the taxi take card payments?", "Will the driver accept a card?"]),
    t("Do the taxis have child seats?", ["Child seats can be provided on request.", ""],
      ["Do the taxis have child seats?", "Can I get child seats in the taxi?", "Are child seats available in the taxi?"]),
    t("Is there room for large suitcases?", ["The taxi boot fits two large suitcases.", ""],
      ["Is there room for large suitcases in the taxi?", "Will my suitcases fit in the taxi?", "Can the taxi take large suitcases?"]),
    t("Can I bring my pet in the taxi?", ["Pets are allowed in the taxi if they are in a carrier.", ""],
      ["Can I bring my pet in the taxi?", "Are pets allowed in the taxi?", "Will the taxi take my pet?"]),
    t("How many passengers can the taxi take?", ["A standard taxi takes up to four passengers.", ""],
      ["How many passengers can the taxi take?", "Can five passengers fit in one taxi?", "What is the passenger limit for the taxi?"]),
];

const FIRST: [&str; 31] = [
    "Amber", "Birch", "Cedar", "Copper", "Crimson", "Emerald", "Falcon", "Golden", "Harbor", "Hazel", "Ivory",
    "Juniper", "Lantern", "Linden", "Maple", "Meadow", "Mulberry", "Orchid", "Pebble", "Quartz", "Raven",
    "Saffron", "Silver", "Sparrow", "Thistle", "Velvet", "Willow", "Wren", "Yarrow", "Zephyr", "Bramble",
];
const SECOND: [&str; 12] = [
    "Court", "Garden", "Crown", "Bridge", "Lane", "Gate", "Arch", "Hollow", "Ridge", "Spring", "Brook", "Field",
];
const ENTITY_DOMAINS: [&str; 3] = ["hotel", "restaurant", "attraction"];

const AREAS: [&str; 5] = ["north", "south", "east", "west", "centre"];
const PRICES: [&str; 3] = ["cheap", "moderately priced", "expensive"];
const DAYS: [&str; 7] = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
const FOODS: [&str; 6] = ["italian", "chinese", "indian", "thai", "french", "british"];
const KINDS: [&str; 5] = ["museum", "park", "theatre", "college", "gallery"];
const CITIES: [&str; 6] = ["london", "ely", "norwich", "stevenage", "peterborough", "kings lynn"];
const CLOSERS: [&str; 3] = [
    "Is there anything else you need?",
    "Anything else I can help with?",
    "Can I help with anything else?",
];
const OPENERS: [&str; 4] = ["", "Thanks. ", "Great, one more thing. ", "Before I decide, "];

fn topics(domain: &str) -> &'static [Topic] {
    match domain {
        "hotel" => &HOTEL,
        "restaurant" => &RESTAURANT,
        "attraction" => &ATTRACTION,
        "train" => &TRAIN,
        _ => &TAXI,
    }
}

fn suffix(domain: &str, i: usize) -> &'static str {
    let s: [&str; 3] = match domain {
        "hotel" => ["Hotel", "Lodge", "Guest House"],
        "restaurant" => ["Kitchen", "Bistro", "Grill"],
        _ => ["Museum", "Gallery", "Theatre"],
    };
    s[(i / 3) % 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    /// Total snippets in the knowledge base.
    pub snippets: usize,
    pub train_dialogues: usize,
    pub validation_dialogues: usize,
    pub test_dialogues: usize,
    /// Share of dialogues that end in a knowledge-seeking turn.
    pub knowledge_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 2020,
            snippets: 1000,
            train_dialogues: 600,
            validation_dialogues: 200,
            test_dialogues: 200,
            knowledge_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub kb: KnowledgeBase,
    pub train: LabeledCorpus,
    pub validation: LabeledCorpus,
    pub test: LabeledCorpus,
}

impl SynthCorpus {
    /// Write `knowledge.json` and `{train,val,test}/{logs,labels}.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("knowledge.json"), self.kb.to_json_string())?;
        for (name, split) in [("train", &self.train), ("val", &self.validation), ("test", &self.test)] {
            let sub = dir.join(name);
            std::fs::create_dir_all(&sub)?;
            std::fs::write(sub.join("logs.json"), split.logs_json())?;
            std::fs::write(sub.join("labels.json"), split.labels_json())?;
        }
        Ok(())
    }
}

struct EntityInfo {
    domain: &'static str,
    id: String,
    name: String,
    area: &'static str,
    price: &'static str,
    docs: usize,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    let domain_level = TRAIN.len() + TAXI.len();
    let per_entity = 16;
    if cfg.snippets < domain_level + ENTITY_DOMAINS.len() * per_entity {
        return Err(Error::Config(format!(
            "synthetic knowledge base needs at least {} snippets",
            domain_level + ENTITY_DOMAINS.len() * per_entity
        )));
    }
    if !(0.0..=1.0).contains(&cfg.knowledge_fraction) {
        return Err(Error::Config("knowledge_fraction must be in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let entity_snippets = cfg.snippets - domain_level;
    let n_entities = entity_snippets / per_entity;
    let remainder = entity_snippets % per_entity;
    if n_entities > FIRST.len() * SECOND.len() {
        return Err(Error::Config("too many snippets for the synthetic name space".into()));
    }

    let mut kb = KnowledgeBase::new();
    for (domain, list) in [("train", &TRAIN[..]), ("taxi", &TAXI[..])] {
        kb.add_entity(domain, DOMAIN_LEVEL_ENTITY, None)?;
        for (i, topic) in list.iter().enumerate() {
            let snippet = Snippet {
                question: topic.question.to_string(),
                answer: topic.answers[0].to_string(),
            };
            kb.insert_snippet(domain, DOMAIN_LEVEL_ENTITY, &i.to_string(), snippet)?;
        }
    }

    let mut entities = Vec::with_capacity(n_entities);
    for i in 0..n_entities {
        let domain = ENTITY_DOMAINS[i % 3];
        let name = format!("{} {} {}", FIRST[i % FIRST.len()], SECOND[(7 * i) % SECOND.len()], suffix(domain, i));
        // The remainder is spread one extra snippet per entity, round-robin.
        let docs = per_entity + usize::from(i < remainder);
        entities.push(EntityInfo {
            domain,
            id: i.to_string(),
            name,
            area: AREAS.choose(&mut rng).copied().unwrap(),
            price: PRICES.choose(&mut rng).copied().unwrap(),
            docs,
        });
    }
    // Entities beyond the round-robin take whatever is left.
    let extra = remainder.saturating_sub(n_entities);
    if let Some(last) = entities.last_mut() {
        last.docs += extra;
    }

    let mut entity_topics: Vec<Vec<usize>> = Vec::with_capacity(entities.len());
    for e in &entities {
        kb.add_entity(e.domain, &e.id, Some(e.name.clone()))?;
        let pool = topics(e.domain);
        if e.docs > pool.len() {
            return Err(Error::Config("too many snippets per synthetic entity".into()));
        }
        let mut chosen: Vec<usize> = (0..pool.len()).collect();
        chosen.shuffle(&mut rng);
        chosen.truncate(e.docs);
        chosen.sort_unstable();
        for (doc, &ti) in chosen.iter().enumerate() {
            let topic = &pool[ti];
            let answer = topic.answers[rng.gen_range(0..2)].replace("{name}", &e.name);
            kb.insert_snippet(
                e.domain,
                &e.id,
                &doc.to_string(),
                Snippet {
                    question: topic.question.to_string(),
                    answer,
                },
            )?;
        }
        entity_topics.push(chosen);
    }

    let mut gen = DialogueGen {
        rng,
        kb: &kb,
        entities: &entities,
        entity_topics: &entity_topics,
        knowledge_fraction: cfg.knowledge_fraction,
    };
    let train = gen.split(cfg.train_dialogues)?;
    let validation = gen.split(cfg.validation_dialogues)?;
    let test = gen.split(cfg.test_dialogues)?;
    Ok(SynthCorpus {
        kb,
        train,
        validation,
        test,
    })
}

struct DialogueGen<'a> {
    rng: ChaCha8Rng,
    kb: &'a KnowledgeBase,
    entities: &'a [EntityInfo],
    entity_topics: &'a [Vec<usize>],
    knowledge_fraction: f64,
}

impl DialogueGen<'_> {
    fn split(&mut self, n: usize) -> Result<LabeledCorpus> {
        let mut dialogues = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let (d, l) = if self.rng.gen_bool(self.knowledge_fraction) {
                self.knowledge_turn()?
            } else {
                (self.api_turn()?, TurnLabel::negative())
            };
            dialogues.push(d);
            labels.push(l);
        }
        LabeledCorpus::new(dialogues, labels)
    }

    fn pick<T: Copy>(&mut self, items: &[T]) -> T {
        *items.choose(&mut self.rng).expect("non-empty choice list")
    }

    fn entity(&mut self) -> usize {
        self.rng.gen_range(0..self.entities.len())
    }

    fn search_request(&mut self, e: &EntityInfo) -> String {
        let area = e.area;
        let price = e.price;
        match e.domain {
            "hotel" => format!("I am looking for a {price} hotel in the {area}."),
            "restaurant" => {
                let food = self.pick(&FOODS);
                format!("Can you find me a {price} {food} restaurant in the {area}?")
            }
            _ => {
                let kind = self.pick(&KINDS);
                format!("What {kind} attractions are there in the {area}?")
            }
        }
    }

    fn train_request(&mut self) -> String {
        let from = self.pick(&CITIES);
        let to = self.pick(&CITIES);
        let day = self.pick(&DAYS);
        let hour = self.rng.gen_range(6..21);
        format!("I need a train from {from} to {to} on {day} leaving after {hour}:00.")
    }

    fn train_offer(&mut self) -> String {
        let id = self.rng.gen_range(1000..9999);
        let hour = self.rng.gen_range(6..21);
        format!("Train TR{id} departs at {hour}:15. Shall I book seats for you?")
    }

    fn taxi_request(&mut self) -> String {
        let a = self.entity();
        let b = self.entity();
        let hour = self.rng.gen_range(6..23);
        format!(
            "I need a taxi from {} to {} at {hour}:30.",
            self.entities[a].name, self.entities[b].name
        )
    }

    fn taxi_offer(&mut self) -> String {
        let car = self.pick(&["red toyota", "white skoda", "black ford", "blue honda"]);
        let phone: u64 = self.rng.gen_range(7_000_000_000..7_999_999_999);
        format!("Your taxi is booked, a {car} will collect you. The contact number is 0{phone}.")
    }

    fn offer(&mut self, e: &EntityInfo) -> String {
        match self.rng.gen_range(0..3) {
            0 => format!("{} is a {} option in the {}.", e.name, e.price, e.area),
            1 => format!("I would recommend {}. Shall I book it?", e.name),
            _ => format!("How about {}? It is in the {}.", e.name, e.area),
        }
    }

    fn booking(&mut self, domain: &str) -> String {
        let n = self.rng.gen_range(1..7);
        let day = self.pick(&DAYS);
        match domain {
            "hotel" => {
                let nights = self.rng.gen_range(1..5);
                format!("Please book it for {n} people for {nights} nights starting {day}.")
            }
            "restaurant" => {
                let hour = self.rng.gen_range(11..22);
                format!("Book a table for {n} people at {hour}:00 on {day} please.")
            }
            "attraction" => self
                .pick(&[
                    "Could you give me the address and postcode?",
                    "What is the phone number there?",
                    "Which area of town is that in?",
                ])
                .to_string(),
            "train" => format!("Yes, please book {n} tickets for that train."),
            _ => self
                .pick(&["Thank you, that is all I need.", "Great, that will be all. Goodbye."])
                .to_string(),
        }
    }

    fn api_turn(&mut self) -> Result<Dialogue> {
        let turns = match self.rng.gen_range(0..5) {
            0 => {
                let req = self.train_request();
                let offer = self.train_offer();
                let book = self.booking("train");
                vec![Turn::user(req), Turn::agent(offer), Turn::user(book)]
            }
            1 => {
                let req = self.taxi_request();
                let offer = self.taxi_offer();
                let done = self.booking("taxi");
                if self.rng.gen_bool(0.5) {
                    vec![Turn::user(req)]
                } else {
                    vec![Turn::user(req), Turn::agent(offer), Turn::user(done)]
                }
            }
            _ => {
                let entities = self.entities;
                let e = &entities[self.entity()];
                let req = self.search_request(e);
                let offer = self.offer(e);
                let book = self.booking(e.domain);
                if self.rng.gen_bool(0.2) {
                    vec![Turn::user(req)]
                } else {
                    vec![Turn::user(req), Turn::agent(offer), Turn::user(book)]
                }
            }
        };
        Dialogue::new(turns)
    }

    fn ask(&mut self, topic: &Topic, reference: &str) -> String {
        let opener = self.pick(&OPENERS);
        let ask = self.pick(&topic.asks).replace("{it}", reference);
        format!("{opener}{ask}")
    }

    fn knowledge_turn(&mut self) -> Result<(Dialogue, TurnLabel)> {
        let roll: f64 = self.rng.gen();
        let (turns, gold) = if roll < 0.15 {
            let ti = self.rng.gen_range(0..TRAIN.len());
            let req = self.train_request();
            let offer = self.train_offer();
            let ask = self.ask(&TRAIN[ti], "the train");
            (
                vec![Turn::user(req), Turn::agent(offer), Turn::user(ask)],
                SnippetRef::new("train", DOMAIN_LEVEL_ENTITY, ti.to_string()),
            )
        } else if roll < 0.25 {
            let ti = self.rng.gen_range(0..TAXI.len());
            let req = self.taxi_request();
            let offer = self.taxi_offer();
            let ask = self.ask(&TAXI[ti], "the taxi");
            (
                vec![Turn::user(req), Turn::agent(offer), Turn::user(ask)],
                SnippetRef::new("taxi", DOMAIN_LEVEL_ENTITY, ti.to_string()),
            )
        } else {
            let entities = self.entities;
            let gi = self.entity();
            let g = &entities[gi];
            let doc = self.rng.gen_range(0..self.entity_topics[gi].len());
            let topic = &topics(g.domain)[self.entity_topics[gi][doc]];
            let mut turns = vec![Turn::user(self.search_request(g))];
            if self.rng.gen_bool(0.5) {
                let mut di = self.entity();
                while di == gi {
                    di = self.entity();
                }
                let d = &entities[di];
                turns.push(Turn::agent(self.offer(d)));
                let other = self.pick(&["What else do you have?", "Do you have any other suggestions?"]);
                turns.push(Turn::user(other.to_string()));
            }
            turns.push(Turn::agent(self.offer(g)));
            let reference = match self.rng.gen_range(0..3) {
                0 => g.name.clone(),
                1 => "it".to_string(),
                _ => format!("the {}", g.domain),
            };
            turns.push(Turn::user(self.ask(topic, &reference)));
            (turns, SnippetRef::new(g.domain, g.id.clone(), doc.to_string()))
        };
        let answer = &self.kb.resolve(&gold)?.answer;
        let closer = self.pick(&CLOSERS);
        let label = TurnLabel::positive(vec![gold], format!("{answer} {closer}"));
        Ok((Dialogue::new(turns)?, label))
    }
}
