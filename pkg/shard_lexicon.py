"""
Bundled sound-word lexicon
==========================

78 sound words, 26 per sound class, each with two synonyms and two
hypernyms in the style of WordNet synsets. Used by the benchmark fixture and
by the synthetic training sources.
"""

from dataclasses import dataclass

SOUND_CLASSES = ("anthrophony", "biophony", "geophony")


@dataclass(frozen=True)
class LexiconEntry:
    word: str
    sound_class: str
    synonyms: tuple
    hypernyms: tuple

    @property
    def canonical_label(self):
        return self.word[0].upper() + self.word[1:]


_ANTHROPHONY = [
    ("car", ("automobile", "motorcar"), ("vehicle", "motor vehicle")),
    ("train", ("railway train", "locomotive"), ("vehicle", "conveyance")),
    ("airplane", ("aeroplane", "plane"), ("aircraft", "conveyance")),
    ("motorcycle", ("motorbike", "bike"), ("vehicle", "motor vehicle")),
    ("bus", ("coach", "autobus"), ("vehicle", "public transport")),
    ("truck", ("lorry", "motortruck"), ("vehicle", "motor vehicle")),
    ("helicopter", ("chopper", "whirlybird"), ("aircraft", "rotorcraft")),
    ("siren", ("alarm", "warning signal"), ("signal", "device")),
    ("bell", ("chime", "gong"), ("percussion instrument", "signal")),
    ("drum", ("tambour", "tom"), ("percussion instrument", "musical instrument")),
    ("piano", ("pianoforte", "forte piano"), ("keyboard instrument", "musical instrument")),
    ("violin", ("fiddle", "violino"), ("bowed instrument", "musical instrument")),
    ("telephone", ("phone", "telephone set"), ("device", "electronic equipment")),
    ("doorbell", ("door chime", "buzzer"), ("signalling device", "device")),
    ("hammer", ("mallet", "sledge"), ("hand tool", "tool")),
    ("chainsaw", ("power saw", "saw"), ("power tool", "tool")),
    ("drill", ("power drill", "electric drill"), ("power tool", "tool")),
    ("vacuum cleaner", ("vacuum", "hoover"), ("home appliance", "appliance")),
    ("clock", ("timepiece", "timekeeper"), ("measuring instrument", "device")),
    ("typing", ("keystroking", "keyboarding"), ("writing", "activity")),
    ("speech", ("talking", "speaking"), ("communication", "human voice")),
    ("laughter", ("laugh", "laughing"), ("utterance", "human voice")),
    ("applause", ("clapping", "handclap"), ("approval", "expression")),
    ("footsteps", ("footfall", "tread"), ("walking", "locomotion")),
    ("engine", ("motor", "power unit"), ("machine", "device")),
    ("fireworks", ("pyrotechnics", "firecracker"), ("explosive", "display")),
]

_BIOPHONY = [
    ("dog", ("hound", "pooch"), ("canine", "animal")),
    ("cat", ("house cat", "kitty"), ("feline", "animal")),
    ("bird", ("fowl", "avian"), ("vertebrate", "animal")),
    ("cow", ("moo cow", "heifer"), ("bovine", "livestock")),
    ("horse", ("steed", "mount"), ("equine", "livestock")),
    ("sheep", ("ewe", "lamb"), ("ruminant", "livestock")),
    ("pig", ("hog", "swine"), ("ungulate", "livestock")),
    ("goat", ("billy goat", "nanny goat"), ("ruminant", "livestock")),
    ("chicken", ("hen", "chook"), ("poultry", "domestic fowl")),
    ("rooster", ("cock", "cockerel"), ("poultry", "domestic fowl")),
    ("duck", ("mallard", "drake"), ("waterfowl", "aquatic bird")),
    ("owl", ("hooter", "night owl"), ("bird of prey", "raptor")),
    ("crow", ("raven", "rook"), ("corvine bird", "passerine")),
    ("frog", ("toad", "anuran"), ("amphibian", "vertebrate")),
    ("cricket", ("field cricket", "grig"), ("insect", "arthropod")),
    ("bee", ("honeybee", "bumblebee"), ("insect", "arthropod")),
    ("mosquito", ("skeeter", "midge"), ("insect", "pest")),
    ("fly", ("housefly", "bluebottle"), ("insect", "pest")),
    ("wolf", ("gray wolf", "timber wolf"), ("canine", "predator")),
    ("lion", ("king of beasts", "panthera leo"), ("big cat", "predator")),
    ("elephant", ("pachyderm", "tusker"), ("mammal", "herbivore")),
    ("whale", ("leviathan", "humpback"), ("cetacean", "marine mammal")),
    ("monkey", ("simian", "macaque"), ("primate", "mammal")),
    ("pigeon", ("dove", "rock pigeon"), ("columbid", "city bird")),
    ("seagull", ("gull", "mew"), ("seabird", "coastal bird")),
    ("woodpecker", ("flicker", "sapsucker"), ("piciform bird", "tree bird")),
]

_GEOPHONY = [
    ("rain", ("rainfall", "downpour"), ("precipitation", "weather")),
    ("thunder", ("thunderclap", "rumble"), ("atmospheric phenomenon", "weather")),
    ("wind", ("breeze", "gust"), ("air current", "weather")),
    ("ocean", ("sea", "deep"), ("body of water", "water")),
    ("waves", ("breakers", "surf"), ("water motion", "water")),
    ("stream", ("brook", "creek"), ("watercourse", "water")),
    ("river", ("waterway", "flowing river"), ("watercourse", "body of water")),
    ("waterfall", ("cascade", "cataract"), ("natural landmark", "water")),
    ("earthquake", ("quake", "tremor"), ("geological phenomenon", "natural disaster")),
    ("volcano", ("eruption", "volcanic eruption"), ("geological phenomenon", "natural disaster")),
    ("avalanche", ("snowslide", "snow slide"), ("mass wasting", "natural disaster")),
    ("hail", ("hailstones", "hailstorm"), ("precipitation", "weather")),
    ("snow", ("snowfall", "flurry"), ("precipitation", "weather")),
    ("storm", ("tempest", "squall"), ("atmospheric phenomenon", "weather")),
    ("hurricane", ("cyclone", "typhoon"), ("windstorm", "natural disaster")),
    ("tornado", ("twister", "whirlwind"), ("windstorm", "natural disaster")),
    ("fire", ("blaze", "flames"), ("combustion", "oxidation")),
    ("rockfall", ("rock slide", "rock avalanche"), ("mass wasting", "natural disaster")),
    ("drizzle", ("mizzle", "sprinkle"), ("precipitation", "weather")),
    ("sleet", ("ice pellets", "graupel"), ("precipitation", "weather")),
    ("geyser", ("gusher", "spouter"), ("hydrothermal feature", "natural landmark")),
    ("glacier", ("ice sheet", "ice field"), ("ice mass", "natural landmark")),
    ("landslide", ("landslip", "mudslide"), ("mass wasting", "natural disaster")),
    ("tide", ("tidal flow", "ebb"), ("water motion", "natural phenomenon")),
    ("lightning", ("thunderbolt", "bolt"), ("electrical discharge", "atmospheric phenomenon")),
    ("sandstorm", ("dust storm", "haboob"), ("windstorm", "weather")),
]

LEXICON = tuple(
    LexiconEntry(word, sound_class, synonyms, hypernyms)
    for sound_class, rows in zip(SOUND_CLASSES, (_ANTHROPHONY, _BIOPHONY, _GEOPHONY))
    for word, synonyms, hypernyms in rows
)


def entries_by_class():
    grouped = {c: [] for c in SOUND_CLASSES}
    for entry in LEXICON:
        grouped[entry.sound_class].append(entry)
    return grouped


def lookup(word):
    for entry in LEXICON:
        if entry.word == word:
            return entry
    raise KeyError(f"'{word}' is not in the sound lexicon")
