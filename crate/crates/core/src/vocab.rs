//! Attribute vocabulary: concepts grouped by domain, each with a canonical
//! phrase and synonym phrases.
//!
//! File format (UTF-8, tab separated, `#` starts a comment line):
//!
//! ```text
//! domain<TAB>canonical phrase<TAB>synonym 1<TAB>synonym 2 ...
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::query::{normalize_phrase, Atom};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Concept {
    pub domain: String,
    /// Canonical phrase used as the query atom and document attribute.
    pub atom: Atom,
    /// All surface forms, canonical first.
    pub forms: Vec<String>,
}

impl Concept {
    pub fn canonical(&self) -> &str {
        &self.forms[0]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    concepts: Vec<Concept>,
    domains: BTreeMap<String, Vec<usize>>,
}

pub const MIN_CONCEPTS: usize = 20;

impl Vocab {
    pub fn new(concepts: Vec<Concept>) -> Result<Self> {
        if concepts.len() < MIN_CONCEPTS {
            return Err(Error::VocabTooSmall(format!(
                "{} distinct attribute phrases, need at least {MIN_CONCEPTS}",
                concepts.len()
            )));
        }
        let mut seen = BTreeMap::new();
        for (i, c) in concepts.iter().enumerate() {
            if c.forms.is_empty() || c.forms[0] != c.atom.as_str() {
                return Err(Error::InvalidVocab(format!(
                    "concept {:?}: first form must be the canonical phrase",
                    c.atom.as_str()
                )));
            }
            for f in &c.forms {
                Atom::new(f).map_err(|e| Error::InvalidVocab(e.to_string()))?;
                if let Some(j) = seen.insert(f.clone(), i) {
                    if j != i {
                        return Err(Error::InvalidVocab(format!("phrase {f:?} used by two concepts")));
                    }
                }
            }
        }
        // A form of one concept must never occur inside another concept's form,
        // otherwise phrase containment cannot tell the concepts apart.
        for (i, a) in concepts.iter().enumerate() {
            for (j, b) in concepts.iter().enumerate() {
                if i == j {
                    continue;
                }
                for fa in &a.forms {
                    if let Some(fb) = b.forms.iter().find(|fb| contains_phrase(fb, fa)) {
                        return Err(Error::InvalidVocab(format!("{fa:?} occurs inside {fb:?}")));
                    }
                }
            }
        }
        let mut domains: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, c) in concepts.iter().enumerate() {
            domains.entry(c.domain.clone()).or_default().push(i);
        }
        Ok(Vocab { concepts, domains })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut concepts = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).filter(|c| !c.is_empty()).collect();
            if cols.len() < 2 {
                return Err(Error::InvalidVocab(format!(
                    "line {}: expected domain and at least one phrase",
                    n + 1
                )));
            }
            let forms: Vec<String> = cols[1..].iter().map(|f| normalize_phrase(f)).collect();
            let atom = Atom::new(&forms[0])
                .map_err(|e| Error::InvalidVocab(format!("line {}: {e}", n + 1)))?;
            concepts.push(Concept { domain: cols[0].to_lowercase(), atom, forms });
        }
        Vocab::new(concepts)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocab::parse(&text)
    }

    pub fn builtin() -> Self {
        Vocab::parse(BUILTIN).expect("built-in vocabulary is valid")
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concept(&self, i: usize) -> &Concept {
        &self.concepts[i]
    }

    /// Concept indices grouped by domain, in file order.
    pub fn domains(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.domains
    }

    pub fn same_domain(&self, i: usize) -> &[usize] {
        &self.domains[&self.concepts[i].domain]
    }

    pub fn find(&self, atom: &Atom) -> Option<usize> {
        self.concepts.iter().position(|c| &c.atom == atom)
    }

    /// True when any surface form of concept `i` occurs in `text` as a whole phrase.
    pub fn mentions(&self, text: &str, i: usize) -> bool {
        self.concepts[i].forms.iter().any(|f| contains_phrase(text, f))
    }
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Whole-word containment, ignoring case and punctuation.
pub fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    let hay = words(haystack);
    let needle = words(phrase);
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

const BUILTIN: &str = "\
# domain\tcanonical\tsynonyms...
film\tfilms set in vietnam\tmovies located in indochina\tvietnamese cinema
film\twar films\tbattlefield movies\tcombat pictures
film\tbritish historical dramas\tenglish period dramas\tuk costume pieces
film\t1960s historical films\tsixties period movies\thistorical pictures from the 1960s
film\tromantic comedies\tromcoms\tlighthearted love stories
film\tscience fiction films\tsci-fi movies\tfuturistic pictures
film\thorror films\tscary movies\tfrightening pictures
film\tanimated films\tcartoon features\tanimation movies
film\tmusic documentaries\tconcert nonfiction films\tdocumentaries about musicians
film\tfilms directed by women\tmovies by female directors\twomen-helmed cinema
film\tcrime thrillers\tgangster movies\theist pictures
film\tsilent films\tpre-talkie movies\tmute era cinema
film\tmusical films\tmovie musicals\tsinging pictures
film\tsports films\tathletics movies\tpictures about competitive games
film\tfilms based on novels\tbook adaptations\tmovies adapted from fiction
film\tjapanese films\tmovies from japan\tnipponese cinema
book\tnon-fiction books about the great recession\tnonfiction on the 2008 financial crisis\taccounts of the global credit crunch
book\tbooks by matt taibbi\tmatt taibbi titles\tworks written by taibbi
book\tfantasy novels\thigh fantasy fiction\ttales of magic realms
book\tdetective novels\tmystery fiction\twhodunit stories
book\tbooks about birds\tornithology literature\tavian field guides
book\tchildren's books\tkids literature\tpicture books for young readers
book\tpoetry collections\tverse anthologies\tvolumes of poems
book\tbiographies of scientists\tscientist life stories\tlives of researchers
book\tcookbooks\trecipe collections\tculinary guides
book\tdystopian novels\tbleak future fiction\ttotalitarian society stories
book\tbooks about world war ii\tsecond world war histories\tww2 chronicles
book\tself-help books\tpersonal development guides\tmotivational literature
book\ttravel writing\tjourney narratives\taccounts of exploring foreign lands
book\tgraphic novels\tcomic book albums\tillustrated sequential stories
book\tphilosophy books\tphilosophical treatises\tworks on ethics
book\tvictorian novels\t19th century english fiction\tfiction from the victorian era
animal\tbirds of mexico\tmexican avifauna\tbird species found in mexico
animal\tanimals endemic to brazil\tbrazilian native fauna\tspecies found only in brazil
animal\tmammals of australia\taustralian mammals\tmarsupials down under
animal\tfish of the amazon river\tamazonian freshwater fish\tamazon basin fishes
animal\tendangered species\tthreatened wildlife\tanimals at risk of extinction
animal\tnocturnal animals\tnight-active creatures\tspecies active after dark
animal\tvenomous snakes\tpoisonous serpents\ttoxic reptiles
animal\tinsects of africa\tafrican bugs\tbeetles of the african continent
animal\tmarine mammals\tocean mammals\tsea-dwelling mammals
animal\tflightless birds\tbirds that cannot fly\tratites
animal\tarctic animals\tpolar fauna\tcreatures of the far north
animal\tdomesticated animals\tfarm livestock\ttamed species
animal\tamphibians of europe\teuropean frogs\teuropean amphibian fauna
animal\textinct animals\tvanished species\tlost creatures of the past
animal\tmigratory birds\tbirds that migrate\tseasonal avian travelers
animal\tpredators of north america\tnorth american carnivores\thunting animals of canada
plant\tflora of south east asia\tsoutheast asian plants\tvegetation of indochina
plant\tflora of china\tchinese plants\tvegetation of the chinese mainland
plant\ttrees of the amazon\tamazon rainforest trees\tamazonian timber species
plant\tplants of europe\teuropean flora\tvegetation of the european continent
plant\tmedicinal plants\thealing herbs\therbal remedies
plant\tcarnivorous plants\tinsect-eating plants\tmeat-eating flora
plant\tsucculents\tdrought-tolerant plants\twater-storing plants
plant\taquatic plants\twater plants\tfreshwater vegetation
plant\torchids\torchid species\tmembers of the orchidaceae
plant\tornamental flowers\tdecorative blooms\tgarden flowers
plant\tedible fruits\tfruit-bearing crops\tfruits eaten by people
plant\talpine plants\tmountain flora\thigh-altitude vegetation
plant\tpoisonous plants\ttoxic flora\tplants harmful if eaten
plant\tferns\tpteridophytes\tfern species
plant\tgrasses\tgrass family plants\tpoaceae species
plant\tinvasive plants\tintroduced weeds\tnon-native vegetation
";
