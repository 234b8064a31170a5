// Keyboard control: discrete steps along the primitive grid so the human's
// action space equals the planner agents'.

import {
  AIRSPEEDS,
  ControlTriple,
  HEADING_RATES,
  VERTICAL_RATES,
} from "./protocol.js";

export class ControlState {
  speedIdx = AIRSPEEDS.indexOf(0.04);
  vertIdx = VERTICAL_RATES.indexOf(0);
  turnIdx = HEADING_RATES.indexOf(0);

  // Returns true when the key changed the commanded triple. The left-turn key
  // steps toward the most-negative heading rate and saturates there.
  onKey(key: string): boolean {
    switch (key) {
      case "ArrowLeft":
        this.turnIdx = Math.max(this.turnIdx - 1, 0);
        return true;
      case "ArrowRight":
        this.turnIdx = Math.min(this.turnIdx + 1, HEADING_RATES.length - 1);
        return true;
      case "ArrowUp":
        this.speedIdx = Math.min(this.speedIdx + 1, AIRSPEEDS.length - 1);
        return true;
      case "ArrowDown":
        this.speedIdx = Math.max(this.speedIdx - 1, 0);
        return true;
      case "w":
        this.vertIdx = Math.min(this.vertIdx + 1, VERTICAL_RATES.length - 1);
        return true;
      case "s":
        this.vertIdx = Math.max(this.vertIdx - 1, 0);
        return true;
      case " ":
        this.turnIdx = HEADING_RATES.indexOf(0);
        return true;
      default:
        return false;
    }
  }

  triple(): ControlTriple {
    return {
      airspeed: AIRSPEEDS[this.speedIdx],
      vertical_rate: VERTICAL_RATES[this.vertIdx],
      heading_rate: HEADING_RATES[this.turnIdx],
    };
  }
}
