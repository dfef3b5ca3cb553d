// Generated from config/north_south.csv; keep the two in sync.
#include "fmx/covariates.hpp"

namespace fmx::defaults {

extern const char* const kNorthCountries;
extern const char* const kSouthCountries;

const char* const kNorthCountries =
    "AD AL AT AU AX BA BE BG BM BY CA CH CZ DE DK EE ES FI FO FR GB GG GI GL GR HR HU IE IM IS IT "
    "JE JP LI LT LU LV MC MD ME MK MT NL NO NZ PL PM PT RO RS RU SE SI SJ SK SM UA US VA";

const char* const kSouthCountries =
    "AE AF AG AI AM AO AQ AR AS AW AZ BB BD BF BH BI BJ BL BN BO BQ BR BS BT BV BW BZ CC CD CF CG "
    "CI CK CL CM CN CO CR CU CV CW CX CY DJ DM DO DZ EC EG EH ER ET FJ FK FM GA GD GE GF GH GM GN "
    "GP GQ GS GT GU GW GY HK HM HN HT ID IL IN IO IQ IR JM JO KE KG KH KI KM KN KP KR KW KY KZ LA "
    "LB LC LK LR LS LY MA MF MG MH ML MM MN MO MP MQ MR MS MU MV MW MX MY MZ NA NC NE NF NG NI NP "
    "NR NU OM PA PE PF PG PH PK PN PR PS PW PY QA RE RW SA SB SC SD SG SH SL SN SO SR SS ST SV SX "
    "SY SZ TC TD TF TG TH TJ TK TL TM TN TO TR TT TV TW TZ UG UM UY UZ VC VE VG VI VN VU WF WS XK "
    "YE YT ZA ZM ZW";

}  // namespace fmx::defaults
