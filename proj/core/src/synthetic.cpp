#include "kattn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "kattn/errors.hpp"

namespace kattn {

namespace {

// "word/TAG word/TAG" phrase notation used by the tables below.
struct Phrase {
  std::vector<std::string> words;
  std::vector<std::string> tags;
};

Phrase phrase(const std::string& spec) {
  Phrase p;
  std::istringstream in(spec);
  std::string item;
  while (in >> item) {
    const auto slash = item.rfind('/');
    p.words.push_back(item.substr(0, slash));
    p.tags.push_back(item.substr(slash + 1));
  }
  return p;
}

struct RelationSpec {
  const char* name;
  const char* subj_type;
  const char* obj_type;
  const char* frame;
  std::vector<const char*> units;
  /// Listed synonyms; the last one never occurs in training sentences.
  std::vector<const char*> synonyms;
  /// Synonym entry that is not actually used to express the relation.
  const char* noisy;
  /// Cue phrases missing from the lexicon; each reuses one listed content word
  /// in an unlisted context.
  std::vector<const char*> unlisted;
};

const std::vector<RelationSpec>& relation_specs() {
  static const std::vector<RelationSpec> specs = {
      {"per:employee_of", "PERSON", "ORGANIZATION", "Employing",
       {"works/VBZ for/IN", "employed/VBN by/IN", "hired/VBN by/IN", "employee/NN of/IN",
        "joined/VBD"},
       {"worked/VBD at/IN", "recruited/VBN by/IN", "staffer/NN at/IN", "engaged/VBN by/IN"},
       "office/NN",
       {"longtime/JJ employee/NN at/IN", "was/VBD hired/VBN at/IN"}},
      {"per:schools_attended", "PERSON", "ORGANIZATION", "Education_teaching",
       {"graduated/VBD from/IN", "studied/VBD at/IN", "alumnus/NN of/IN", "enrolled/VBN at/IN"},
       {"attended/VBD", "educated/VBN at/IN", "schooled/VBN at/IN", "matriculated/VBD at/IN"},
       "campus/NN",
       {"studied/VBD law/NN at/IN", "proud/JJ alumnus/NN from/IN"}},
      {"org:founded_by", "ORGANIZATION", "PERSON", "Intentionally_create",
       {"founded/VBN by/IN", "established/VBN by/IN", "created/VBN by/IN", "started/VBN by/IN"},
       {"launched/VBN by/IN", "set/VBN up/RP by/IN", "formed/VBN by/IN", "instituted/VBN by/IN"},
       "venture/NN",
       {"originally/RB founded/VBN with/IN", "first/RB created/VBN under/IN"}},
      {"per:city_of_birth", "PERSON", "LOCATION", "Being_born",
       {"born/VBN in/IN", "birthplace/NN", "native/NN of/IN"},
       {"hails/VBZ from/IN", "delivered/VBN in/IN", "entered/VBD life/NN in/IN"},
       "hospital/NN",
       {"was/VBD born/VBN near/IN", "native/JJ son/NN of/IN"}},
      {"per:cities_of_residence", "PERSON", "LOCATION", "Residence",
       {"lives/VBZ in/IN", "resides/VBZ in/IN", "resident/NN of/IN", "settled/VBD in/IN"},
       {"dwells/VBZ in/IN", "inhabits/VBZ", "domiciled/VBN in/IN", "lodges/VBZ in/IN"},
       "house/NN",
       {"now/RB lives/VBZ near/IN", "settled/VBN down/RP in/IN"}},
      {"org:city_of_headquarters", "ORGANIZATION", "LOCATION", "Locale_by_use",
       {"headquartered/VBN in/IN", "headquarters/NNS in/IN", "based/VBN in/IN"},
       {"seated/VBN in/IN", "centered/VBN in/IN", "anchored/VBN in/IN"},
       "building/NN",
       {"based/VBN out/IN of/IN", "main/JJ headquarters/NNS near/IN"}},
      {"per:spouse", "PERSON", "PERSON", "Personal_relationship",
       {"married/VBD", "wife/NN of/IN", "husband/NN of/IN", "spouse/NN of/IN"},
       {"wed/VBD", "partner/NN of/IN", "betrothed/VBN to/TO", "espoused/VBD"},
       "wedding/NN",
       {"happily/RB married/VBN to/TO", "former/JJ wife/NN to/TO"}},
      {"per:title", "PERSON", "TITLE", "Performers_and_roles",
       {"serves/VBZ as/IN", "appointed/VBN", "named/VBN"},
       {"acting/VBG as/IN", "elected/VBN", "installed/VBN as/IN", "designated/VBN"},
       "career/NN",
       {"was/VBD named/VBN interim/JJ", "newly/RB appointed/VBN as/IN"}},
  };
  return specs;
}

const std::vector<const char*>& filler_specs() {
  static const std::vector<const char*> f = {
      "the/DT",        "a/DT",          "said/VBD",     "on/IN",         "yesterday/NN",
      "statement/NN",  "local/JJ",      "new/JJ",       "report/NN",     "officials/NNS",
      "recently/RB",   "also/RB",       "that/IN",      "after/IN",      "during/IN",
      "week/NN",       "year/NN",       "its/PRP$",     "his/PRP$",      "her/PRP$",
      "people/NNS",    "group/NN",      "team/NN",      "project/NN",    "program/NN",
      "plan/NN",       "deal/NN",       "market/NN",    "time/NN",       "later/RB",
      "told/VBD",      "reporters/NNS", ",/,",          "and/CC",        "while/IN",
      "is/VBZ",        "was/VBD",       "has/VBZ",      "many/JJ",       "several/JJ",
      "major/JJ",      "public/JJ",     "news/NN",      "interview/NN",  "event/NN",
      "meeting/NN",    "conference/NN", "visit/NN",     "budget/NN",     "season/NN",
      "announced/VBD", "reported/VBD",  "expected/VBN", "today/NN",      "morning/NN",
      "friday/NNP",    "monday/NNP",    "with/IN",      "about/IN",      "more/JJR",
  };
  return f;
}

const std::vector<std::pair<const char*, std::vector<const char*>>>& entity_specs() {
  static const std::vector<std::pair<const char*, std::vector<const char*>>> e = {
      {"PERSON",
       {"James/NNP Dobson/NNP", "Maria/NNP Lopez/NNP", "Wei/NNP Chen/NNP", "Anna/NNP",
        "Peter/NNP Novak/NNP", "Sara/NNP Cohen/NNP", "Omar/NNP Haddad/NNP", "Linda/NNP Park/NNP",
        "Tom/NNP", "Ines/NNP Duarte/NNP", "Raj/NNP Patel/NNP", "Olga/NNP Ivanova/NNP",
        "Kofi/NNP Mensah/NNP", "Emma/NNP Stone/NNP", "Luis/NNP", "Hana/NNP Sato/NNP"}},
      {"ORGANIZATION",
       {"Acme/NNP Corp/NNP", "Globex/NNP", "Initech/NNP", "Stark/NNP Industries/NNPS",
        "Hooli/NNP", "Umbrella/NNP Group/NNP", "Northwind/NNP Traders/NNPS",
        "Riverside/NNP University/NNP", "Vandelay/NNP Industries/NNPS", "Oakridge/NNP College/NNP",
        "Wayne/NNP Enterprises/NNPS", "Pioneer/NNP Institute/NNP"}},
      {"LOCATION",
       {"Boston/NNP", "Lisbon/NNP", "Osaka/NNP", "Nairobi/NNP", "Denver/NNP", "Krakow/NNP",
        "New/NNP York/NNP", "San/NNP Diego/NNP", "Lyon/NNP", "Hamburg/NNP", "Quito/NNP",
        "Perth/NNP"}},
      {"TITLE",
       {"director/NN", "chairman/NN", "president/NN", "treasurer/NN", "editor/NN", "coach/NN",
        "chief/JJ executive/NN", "secretary/NN"}},
  };
  return e;
}

class Generator {
 public:
  explicit Generator(const SyntheticOptions& opt) : opt_(opt), rng_(opt.seed) {
    const auto& specs = relation_specs();
    if (opt.n_relations == 0 || opt.n_relations > specs.size()) {
      throw ConfigError("synthetic generator supports 1.." + std::to_string(specs.size()) +
                        " relations, got " + std::to_string(opt.n_relations));
    }
    if (!(opt.negative_fraction >= 0.0 && opt.negative_fraction < 1.0)) {
      throw ConfigError("negative_fraction must lie in [0, 1)");
    }
    if (!(opt.mismatched_fraction >= 0.0 && opt.mismatched_fraction <= 1.0)) {
      throw ConfigError("mismatched_fraction must lie in [0, 1]");
    }
    for (std::size_t r = 0; r < opt.n_relations; ++r) specs_.push_back(&specs[r]);
    for (const char* f : filler_specs()) fillers_.push_back(phrase(f));
    for (const auto& [type, names] : entity_specs()) {
      for (const char* n : names) entities_[type].push_back(phrase(n));
    }
  }

  SyntheticData run() {
    SyntheticData d;
    d.relations.push_back(opt_.negative_class);
    for (const RelationSpec* s : specs_) d.relations.push_back(s->name);
    d.lexicon = lexicon();
    d.splits.train = split("train", opt_.n_train, true);
    d.splits.dev = split("dev", opt_.n_dev, false);
    d.splits.test = split("test", opt_.n_test, false);
    embeddings(d);
    return d;
  }

 private:
  std::size_t uniform(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  bool coin(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[uniform(0, v.size() - 1)];
  }

  std::vector<LexiconEntry> lexicon() const {
    std::vector<LexiconEntry> out;
    auto add = [&](const RelationSpec& s, const char* text, IndicatorSource src) {
      const Phrase p = phrase(text);
      out.push_back({s.name, s.frame, p.words, p.tags, src});
    };
    for (const RelationSpec* s : specs_) {
      for (const char* u : s->units) add(*s, u, IndicatorSource::FrameUnit);
    }
    for (const RelationSpec* s : specs_) {
      for (const char* u : s->synonyms) add(*s, u, IndicatorSource::Synonym);
      add(*s, s->noisy, IndicatorSource::Synonym);
    }
    return out;
  }

  struct Tokens {
    std::vector<std::string> words;
    std::vector<std::string> pos;
    std::vector<std::string> ner;

    void append(const Phrase& p, const std::string& ner_tag) {
      words.insert(words.end(), p.words.begin(), p.words.end());
      pos.insert(pos.end(), p.tags.begin(), p.tags.end());
      ner.insert(ner.end(), p.words.size(), ner_tag);
    }
  };

  void fill(Tokens& t, std::size_t lo, std::size_t hi) {
    const std::size_t n = uniform(lo, hi);
    for (std::size_t i = 0; i < n; ++i) t.append(pick(fillers_), "O");
  }

  Phrase cue_for(const RelationSpec& s, bool train) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    if (u < (train ? 0.15 : 0.2)) return phrase(pick(s.unlisted));
    if (u < (train ? 0.35 : 0.5)) {
      // The last synonym stays out of training sentences.
      const std::size_t n = s.synonyms.size() - (train ? 1 : 0);
      return phrase(s.synonyms[uniform(0, n - 1)]);
    }
    return phrase(pick(s.units));
  }

  Phrase any_cue() {
    const RelationSpec& s = *pick(specs_);
    return coin(0.5) ? phrase(pick(s.units)) : phrase(pick(s.synonyms));
  }

  Phrase mismatched_cue(const RelationSpec& types) {
    std::vector<const RelationSpec*> other;
    for (const RelationSpec* s : specs_) {
      const std::set<std::string> a{s->subj_type, s->obj_type};
      const std::set<std::string> b{types.subj_type, types.obj_type};
      if (a != b) {
        other.push_back(s);
      }
    }
    if (other.empty()) return pick(fillers_);
    const RelationSpec& s = *pick(other);
    return coin(0.5) ? phrase(pick(s.units)) : phrase(pick(s.synonyms));
  }

  RawExample sentence(const std::string& id, const RelationSpec* rel, bool train) {
    const RelationSpec& types = rel != nullptr ? *rel : *pick(specs_);
    const Phrase subj = pick(entities_.at(types.subj_type));
    Phrase obj = pick(entities_.at(types.obj_type));
    while (obj.words == subj.words) obj = pick(entities_.at(types.obj_type));
    const bool subj_first = coin(0.75);

    Tokens t;
    // A distractor cue, when present, sits one or two fillers outside the
    // entity pair.
    const bool distractor = rel == nullptr ? coin(0.5) : coin(0.3);
    const bool distractor_front = coin(0.5);
    if (distractor && distractor_front) {
      fill(t, 0, 1);
      t.append(any_cue(), "O");
      fill(t, 1, 2);
    } else {
      fill(t, 0, 3);
    }
    RawExample ex;
    ex.id = id;
    auto put_entity = [&](const Phrase& p, const char* type, Span& span) {
      span.start = t.words.size();
      t.append(p, type);
      span.end = t.words.size() - 1;
    };
    Span first;
    Span second;
    put_entity(subj_first ? subj : obj, subj_first ? types.subj_type : types.obj_type, first);
    if (rel != nullptr) {
      fill(t, 0, 1);
      t.append(cue_for(*rel, train), "O");
      fill(t, 0, 1);
    } else if (coin(opt_.mismatched_fraction)) {
      // A real cue between the entities, but for a relation whose argument
      // types do not fit this pair.
      fill(t, 0, 1);
      t.append(mismatched_cue(types), "O");
      fill(t, 0, 1);
    } else {
      fill(t, 1, 4);
    }
    put_entity(subj_first ? obj : subj, subj_first ? types.obj_type : types.subj_type, second);
    if (distractor && !distractor_front) {
      fill(t, 1, 2);
      t.append(any_cue(), "O");
      fill(t, 0, 1);
    } else {
      fill(t, 0, 3);
    }
    t.append(phrase("./."), "O");

    ex.subj = subj_first ? first : second;
    ex.obj = subj_first ? second : first;
    ex.subj_type = types.subj_type;
    ex.obj_type = types.obj_type;
    ex.tokens = std::move(t.words);
    ex.pos = std::move(t.pos);
    ex.ner = std::move(t.ner);
    ex.relation = rel != nullptr ? rel->name : opt_.negative_class;
    return ex;
  }

  std::vector<RawExample> split(const std::string& name, std::size_t n, bool train) {
    const auto negatives =
        static_cast<std::size_t>(std::llround(opt_.negative_fraction * static_cast<double>(n)));
    std::vector<const RelationSpec*> labels(negatives, nullptr);
    for (std::size_t i = 0; labels.size() < n; ++i) labels.push_back(specs_[i % specs_.size()]);
    std::shuffle(labels.begin(), labels.end(), rng_);
    std::vector<RawExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(sentence(name + "-" + std::to_string(i), labels[i], train));
    }
    return out;
  }

  void embeddings(SyntheticData& d) {
    // Word -> relation whose cue it helps express, with an alignment strength.
    std::map<std::string, std::pair<std::size_t, double>> aligned;
    std::set<std::string> function_words;
    for (std::size_t r = 0; r < specs_.size(); ++r) {
      auto mark = [&](const char* text, double strength) {
        const Phrase p = phrase(text);
        for (std::size_t i = 0; i < p.words.size(); ++i) {
          if (p.tags[i] == "IN" || p.tags[i] == "TO" || p.tags[i] == "RP") {
            function_words.insert(p.words[i]);
          } else {
            aligned.emplace(p.words[i], std::make_pair(r, strength));
          }
        }
      };
      for (const char* u : specs_[r]->units) mark(u, 1.0);
      for (const char* u : specs_[r]->synonyms) mark(u, 0.8);
      for (const char* u : specs_[r]->unlisted) mark(u, 0.5);
    }
    std::vector<std::string> words;
    std::set<std::string> seen;
    auto add_word = [&](const std::string& w) {
      if (seen.insert(w).second) words.push_back(w);
    };
    for (const LexiconEntry& e : d.lexicon) {
      for (const auto& w : e.words) add_word(w);
    }
    for (const RelationSpec* s : specs_) {
      for (const char* u : s->unlisted) {
        for (const auto& w : phrase(u).words) add_word(w);
      }
    }
    for (const Phrase& f : fillers_) add_word(f.words[0]);
    for (const auto& [type, names] : entities_) {
      for (const Phrase& p : names) {
        for (const auto& w : p.words) add_word(w);
      }
    }
    add_word(".");

    const std::size_t dim = opt_.embedding_dim;
    std::normal_distribution<double> normal(0.0, 1.0);
    // Component scale close to 300-d GloVe vectors (row norms around 6).
    const double sigma = 0.35;
    std::vector<std::vector<double>> directions(specs_.size(), std::vector<double>(dim));
    for (auto& dir : directions) {
      for (double& v : dir) v = sigma * normal(rng_);
    }
    for (const std::string& w : words) {
      std::vector<double> vec(dim);
      const auto it = aligned.find(w);
      const double noise = it != aligned.end() ? 0.6 : 1.0;
      for (std::size_t k = 0; k < dim; ++k) vec[k] = noise * sigma * normal(rng_);
      if (it != aligned.end()) {
        const auto [r, strength] = it->second;
        for (std::size_t k = 0; k < dim; ++k) vec[k] += strength * directions[r][k];
      }
      d.embedding_words.push_back(w);
      d.embedding_vectors.push_back(std::move(vec));
    }
  }

  SyntheticOptions opt_;
  std::mt19937_64 rng_;
  std::vector<const RelationSpec*> specs_;
  std::vector<Phrase> fillers_;
  std::map<std::string, std::vector<Phrase>> entities_;
};

}  // namespace

std::size_t synthetic_relation_capacity() { return relation_specs().size(); }

SyntheticData generate_synthetic(const SyntheticOptions& options) {
  return Generator(options).run();
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_dataset(dir / "train.jsonl", data.splits.train);
  save_dataset(dir / "dev.jsonl", data.splits.dev);
  save_dataset(dir / "test.jsonl", data.splits.test);
  save_lexicon(dir / "lexicon.jsonl", data.lexicon);
  std::ofstream out(dir / "embeddings.txt", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "embeddings.txt").string());
  char buf[32];
  for (std::size_t i = 0; i < data.embedding_words.size(); ++i) {
    out << data.embedding_words[i];
    for (double v : data.embedding_vectors[i]) {
      std::snprintf(buf, sizeof buf, " %.5f", v);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace kattn
