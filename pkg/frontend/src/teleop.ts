// Keyboard teleoperation: held keys map to throttle/steering commands
// sent at a fixed cadence; releasing keys decays the command to zero
// within one send period. Losing control or window focus is a
// dead-man condition: one final zero command, then silence.

export interface KeyState {
  forward: boolean;
  reverse: boolean;
  left: boolean;
  right: boolean;
}

export const SEND_PERIOD_MS = 50; // 20 Hz, latest-wins on the server

const KEY_MAP: Record<string, keyof KeyState> = {
  ArrowUp: "forward",
  KeyW: "forward",
  ArrowDown: "reverse",
  KeyS: "reverse",
  ArrowLeft: "left",
  KeyA: "left",
  ArrowRight: "right",
  KeyD: "right",
};

export function commandFromKeys(keys: KeyState): { throttle: number; steering: number } {
  const throttle = (keys.forward ? 1 : 0) - (keys.reverse ? 1 : 0);
  const steering = (keys.left ? 1 : 0) - (keys.right ? 1 : 0); // positive steers left
  return { throttle, steering };
}

export type SendCommand = (throttle: number, steering: number) => void;

export class TeleopLoop {
  private keys: KeyState = { forward: false, reverse: false, left: false, right: false };
  private enabled = true;
  private zeroSent = true; // nothing to say until a key is pressed

  constructor(private send: SendCommand) {}

  keyDown(code: string): boolean {
    const key = KEY_MAP[code];
    if (!key) return false;
    this.keys[key] = true;
    return true;
  }

  keyUp(code: string): boolean {
    const key = KEY_MAP[code];
    if (!key) return false;
    this.keys[key] = false;
    return true;
  }

  /** Dead-man release: next tick emits one zero command, then nothing. */
  disable(): void {
    this.enabled = false;
    this.keys = { forward: false, reverse: false, left: false, right: false };
  }

  enable(): void {
    this.enabled = true;
  }

  /** Called once per send period. */
  tick(): void {
    const { throttle, steering } = this.enabled
      ? commandFromKeys(this.keys)
      : { throttle: 0, steering: 0 };
    const isZero = throttle === 0 && steering === 0;
    if (isZero && this.zeroSent) return; // stream stops once zero is confirmed
    this.send(throttle, steering);
    this.zeroSent = isZero;
  }
}
